"""Rolling-window dynamic graph evolution.

Each personalized graph is converted into a sequence of per-window snapshots:
within-window standardized ridge regressions over the personalized parent
sets produce clipped candidate updates, which are exponentially smoothed
across adjacent windows. Smoothing operates on internal pre-threshold
weights; the emission threshold only affects the exported snapshot, so an
edge dipping below it can recover later.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .edges import Edge, EdgeList
from .persgraph import PatientGraph
from .statetable import EPS_SD, standardize_array


@dataclass(frozen=True)
class DynConfig:
    window: int = 14
    step: int = 3
    ridge: float = 0.10
    gamma: float = 0.20
    rho: float = 0.00
    max_update: float = 0.08
    smoothing: float = 0.60
    threshold: float = 0.05

    def validate(self) -> None:
        if self.window < 4:
            raise ValueError("window must be >= 4")
        if self.step < 1:
            raise ValueError("step must be >= 1")
        if not 0.0 <= self.smoothing <= 1.0:
            raise ValueError("smoothing must be in [0, 1]")


@dataclass
class DynamicGraphSequence:
    patient_id: int
    windows: list[tuple[int, int]]
    snapshots: list[EdgeList]  # thresholded, one per window
    weight_history: dict[tuple[str, str], np.ndarray]  # internal smoothed weights
    volatility: np.ndarray  # (n_windows, d) window SD / patient SD per variable

    def snapshot_weights(self, q: int) -> dict[tuple[str, str], float]:
        return {(e.source, e.target): e.weight for e in self.snapshots[q]}


def windows(t_len: int, window: int, step: int) -> list[tuple[int, int]]:
    """Rolling (start, end) ranges: starts 0, step, 2*step while start+window <= T."""
    if t_len < window:
        raise ValueError(f"trajectory length {t_len} shorter than window {window}")
    return [(s, s + window) for s in range(0, t_len - window + 1, step)]


def fit_window_ridge(window_std: np.ndarray, target: int, parents: list[int],
                     ridge: float) -> np.ndarray:
    """Ridge lag-1 regression on a within-window standardized segment."""
    if not parents:
        return np.zeros(0)
    if window_std.shape[0] < 3:
        raise ValueError("window too short for a lag-1 ridge fit")
    x = window_std[:-1, parents]
    y = window_std[1:, target]
    xtx = x.T @ x + ridge * np.eye(len(parents))
    return np.linalg.solve(xtx, x.T @ y)


def dynamic_update(weight: float, beta: float, nu: float,
                   config: DynConfig) -> float:
    """Clipped candidate weight for one edge in one window."""
    eps = np.clip(
        config.gamma * beta * abs(weight) + config.rho * (nu - 1.0) * abs(weight),
        -config.max_update, config.max_update,
    )
    return float(np.clip(weight + eps, 0.0, 1.0))


def smooth(previous: float, candidate: float, alpha: float) -> float:
    """Exponential blend of the previous internal weight and the candidate."""
    return alpha * previous + (1.0 - alpha) * candidate


def evolve(pgraph: PatientGraph, series_std: np.ndarray, config: DynConfig,
           variables: tuple[str, ...]) -> DynamicGraphSequence:
    """Produce the full per-window graph sequence for one patient.

    `series_std` is the within-patient standardized trajectory; each window is
    re-standardized within itself before the ridge fits.
    """
    config.validate()
    idx = {v: i for i, v in enumerate(variables)}
    try:
        ranges = windows(series_std.shape[0], config.window, config.step)
    except ValueError as err:
        raise ValueError(f"patient {pgraph.patient_id}: {err}") from err

    parent_map: dict[str, list[str]] = {v: [] for v in variables}
    for edge in pgraph.edges:
        parent_map[edge.target].append(edge.source)
    for target in parent_map:
        parent_map[target].sort(key=lambda s: idx[s])
    base = pgraph.weights()

    patient_sd = np.maximum(series_std.std(axis=0), EPS_SD)
    history = {key: np.zeros(len(ranges)) for key in base}
    volatility = np.zeros((len(ranges), len(variables)))
    snapshots: list[EdgeList] = []

    internal = dict(base)
    for q, (start, end) in enumerate(ranges):
        segment = series_std[start:end]
        wstd, _, wsds = standardize_array(segment)
        volatility[q] = wsds / patient_sd

        betas: dict[tuple[str, str], float] = {}
        for target, sources in parent_map.items():
            if not sources:
                continue
            cols = [idx[s] for s in sources]
            try:
                beta = fit_window_ridge(wstd, idx[target], cols, config.ridge)
            except ValueError as err:
                raise ValueError(
                    f"patient {pgraph.patient_id}, window {q}: {err}"
                ) from err
            for source, b in zip(sources, beta):
                betas[(source, target)] = float(b)

        snapshot: EdgeList = []
        for key in sorted(base):
            source, target = key
            nu = float(volatility[q, idx[source]])
            candidate = dynamic_update(base[key], betas[key], nu, config)
            if q == 0:
                internal[key] = candidate
            else:
                internal[key] = smooth(internal[key], candidate, config.smoothing)
            history[key][q] = internal[key]
            if internal[key] >= config.threshold:
                snapshot.append(Edge(source, target, internal[key], "dynamic"))
        snapshots.append(snapshot)

    return DynamicGraphSequence(pgraph.patient_id, ranges, snapshots, history, volatility)
