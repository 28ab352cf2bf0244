"""Shared weighted directed edge-list type used across pipeline stages."""
from __future__ import annotations

from dataclasses import dataclass

import pandas as pd


@dataclass(frozen=True)
class Edge:
    source: str
    target: str
    weight: float
    method: str

    def __post_init__(self):
        if self.source == self.target:
            raise ValueError(f"self-loop edge {self.source}->{self.target}")
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError(f"edge weight {self.weight} outside [0, 1]")


EdgeList = list[Edge]


def support(edges: EdgeList) -> set[tuple[str, str]]:
    return {(e.source, e.target) for e in edges}


def weight_map(edges: EdgeList) -> dict[tuple[str, str], float]:
    return {(e.source, e.target): e.weight for e in edges}


def edges_to_frame(edges: EdgeList) -> pd.DataFrame:
    return pd.DataFrame(
        [(e.source, e.target, e.weight, e.method) for e in edges],
        columns=["source", "target", "weight", "method"],
    )


def frame_to_edges(frame: pd.DataFrame) -> EdgeList:
    return [
        Edge(row.source, row.target, float(row.weight), row.method)
        for row in frame.itertuples(index=False)
    ]
