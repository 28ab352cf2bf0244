"""Per-patient adaptation of the population graph.

Patient-specific lag-1 regressions over population-supported parent sets
drive a conservative, clipped reweighting of the exported population edges.
Adaptation never adds edges; it can only reweight or drop them. A
Granger-style predictive contribution (full-model vs. reduced-model MSE) is
computed per edge for reporting.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .edges import Edge, EdgeList, weight_map

RIDGE_FALLBACK = 1e-6
COND_LIMIT = 1e10


@dataclass(frozen=True)
class AdaptConfig:
    eta: float = 0.20
    xi: float = 0.00
    max_update: float = 0.05
    threshold: float = 0.12

    def validate(self) -> None:
        if self.max_update < 0:
            raise ValueError("max_update must be non-negative")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must be in [0, 1]")


@dataclass
class PatientGraph:
    patient_id: int
    edges: EdgeList
    betas: dict[tuple[str, str], float]
    granger: dict[tuple[str, str], float]

    def weights(self) -> dict[tuple[str, str], float]:
        return weight_map(self.edges)


def parent_sets(w0: EdgeList, variables: tuple[str, ...]) -> dict[str, list[str]]:
    """Population-supported parents per target, ordered by variable index."""
    idx = {v: i for i, v in enumerate(variables)}
    out: dict[str, list[str]] = {v: [] for v in variables}
    for edge in w0:
        out[edge.target].append(edge.source)
    for target in out:
        out[target].sort(key=lambda s: idx[s])
    return out


def _solve(xtx: np.ndarray, xty: np.ndarray) -> np.ndarray:
    # ridge fallback keeps short collinear parent sets from crashing
    try:
        if np.linalg.cond(xtx) < COND_LIMIT:
            return np.linalg.solve(xtx, xty)
    except np.linalg.LinAlgError:
        pass
    return np.linalg.solve(xtx + RIDGE_FALLBACK * np.eye(xtx.shape[0]), xty)


def fit_patient_ar(series: np.ndarray, target: int,
                   parents: list[int]) -> np.ndarray:
    """No-intercept OLS of x[target, t] on lagged parents, t = 1..T-1.

    `series` is a within-patient standardized (T, d) array.
    """
    series = np.asarray(series, dtype=float)
    y = series[1:, target]
    if not parents:
        return np.zeros(0)
    if y.size < len(parents) + 2:
        raise ValueError(
            f"series too short for {len(parents)} parents: {y.size} lag pairs"
        )
    x = series[:-1, parents]
    return _solve(x.T @ x, x.T @ y)


def _mse(series: np.ndarray, target: int, parents: list[int]) -> float:
    y = series[1:, target]
    if not parents:
        return float((y ** 2).mean())
    beta = fit_patient_ar(series, target, parents)
    resid = y - series[:-1, parents] @ beta
    return float((resid ** 2).mean())


def granger_contribution(series: np.ndarray, target: int,
                         parents: list[int], drop: int) -> float:
    """MSE(model without `drop`) minus MSE(full model); larger helps more."""
    if drop not in parents:
        raise ValueError("dropped variable is not a parent")
    reduced = [p for p in parents if p != drop]
    return _mse(series, target, reduced) - _mse(series, target, parents)


def adapt(w0: EdgeList, betas: dict[tuple[str, str], float],
          variability: dict[str, float], config: AdaptConfig,
          patient_id: int = -1,
          granger: dict[tuple[str, str], float] | None = None) -> PatientGraph:
    """Clipped conservative reweighting of the population edges.

    delta = clip(eta*beta*|w0| + xi*(nu-1)*|w0|, +-max_update); edges whose
    updated weight falls below the threshold are dropped.
    """
    config.validate()
    kept: EdgeList = []
    for edge in w0:
        key = (edge.source, edge.target)
        beta = betas[key]
        nu = variability.get(edge.source, 1.0)
        delta = np.clip(
            config.eta * beta * abs(edge.weight)
            + config.xi * (nu - 1.0) * abs(edge.weight),
            -config.max_update, config.max_update,
        )
        weight = float(np.clip(edge.weight + delta, 0.0, 1.0))
        if weight >= config.threshold:
            kept.append(Edge(edge.source, edge.target, weight, "personalized"))
    return PatientGraph(patient_id, kept, dict(betas), dict(granger or {}))


def personalize(series_std: np.ndarray, w0: EdgeList,
                variability: dict[str, float], config: AdaptConfig,
                variables: tuple[str, ...], patient_id: int) -> PatientGraph:
    """Fit per-target regressions for one patient and adapt the scaffold."""
    idx = {v: i for i, v in enumerate(variables)}
    parents = parent_sets(w0, variables)
    betas: dict[tuple[str, str], float] = {}
    granger: dict[tuple[str, str], float] = {}
    for target, sources in parents.items():
        if not sources:
            continue
        cols = [idx[s] for s in sources]
        try:
            beta = fit_patient_ar(series_std, idx[target], cols)
        except ValueError as err:
            raise ValueError(f"patient {patient_id}: {err}") from err
        for source, b in zip(sources, beta):
            betas[(source, target)] = float(b)
            granger[(source, target)] = granger_contribution(
                series_std, idx[target], cols, idx[source]
            )
    return adapt(w0, betas, variability, config, patient_id, granger)
