"""Metrics, internal baselines, ablations, and the pipeline audit."""
from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np
import pandas as pd

from .edges import Edge, EdgeList
from .dyngraph import DynamicGraphSequence, windows as window_ranges
from .simgen import VARIABLES, VAR_INDEX


@dataclass
class GraphMetrics:
    precision: float
    recall: float
    f1: float
    shd: float


@dataclass
class DynamicMetrics:
    direction_accuracy: float
    temporal_correlation: float
    temporal_mse: float
    dynamic_shd: float


@dataclass
class InterventionMetrics:
    direction_accuracy: float
    mean_glucose_change: float


@dataclass
class RecommendationMetrics:
    coverage: float
    mean_effect: float
    faithfulness: float


def graph_metrics(predicted, truth) -> GraphMetrics:
    """Directed precision/recall/F1 and SHD (a reversed edge counts once)."""
    pred = {(e.source, e.target) for e in predicted} if predicted and isinstance(
        next(iter(predicted)), Edge) else set(predicted)
    truth = set(truth)
    for edges in (pred, truth):
        if any(u == v for u, v in edges):
            raise ValueError("self-loops are not allowed")
    tp = len(pred & truth)
    fp = pred - truth
    fn = truth - pred
    precision = tp / len(pred) if pred else (1.0 if not truth else 0.0)
    recall = tp / len(truth) if truth else 1.0
    f1 = (2 * precision * recall / (precision + recall)
          if precision + recall > 0 else 0.0)
    reversed_pairs = sum(1 for u, v in fp if (v, u) in fn)
    shd = len(fp) + len(fn) - reversed_pairs
    return GraphMetrics(precision, recall, f1, float(shd))


def mean_graph_metrics(per_patient: list[GraphMetrics]) -> GraphMetrics:
    """Equal-weight average of per-patient graph metrics."""
    return GraphMetrics(
        float(np.mean([g.precision for g in per_patient])),
        float(np.mean([g.recall for g in per_patient])),
        float(np.mean([g.f1 for g in per_patient])),
        float(np.mean([g.shd for g in per_patient])),
    )


def _minmax(values: np.ndarray) -> np.ndarray:
    lo, hi = values.min(), values.max()
    if hi - lo < 1e-12:
        return np.full_like(values, 0.5)
    return (values - lo) / (hi - lo)


def dynamic_metrics(estimated: dict[tuple[int, tuple[str, str]], np.ndarray],
                    oracle: dict[tuple[int, tuple[str, str]], np.ndarray],
                    snapshot_supports: dict[int, list[set[tuple[str, str]]]],
                    truth: set[tuple[str, str]],
                    zero_change_tol: float = 0.01) -> DynamicMetrics:
    """Dynamic tracking quality of estimated weight trajectories on true edges.

    Direction accuracy compares consecutive-window changes against the oracle
    (a zero oracle change requires |estimated change| < zero_change_tol);
    correlation skips zero-variance trajectories; MSE is computed after
    per-edge min-max normalization of both trajectories.
    """
    dir_hits, dir_total = 0, 0
    corrs, mses = [], []
    for key, est in estimated.items():
        orc = oracle[key]
        d_est = np.diff(est)
        d_orc = np.diff(orc)
        for de, do in zip(d_est, d_orc):
            dir_total += 1
            if abs(do) < 1e-12:
                dir_hits += abs(de) < zero_change_tol
            else:
                dir_hits += np.sign(de) == np.sign(do)
        if est.std() > 1e-12 and orc.std() > 1e-12:
            corrs.append(float(np.corrcoef(est, orc)[0, 1]))
        mses.append(float(((_minmax(est) - _minmax(orc)) ** 2).mean()))

    shds = []
    for pid, supports in snapshot_supports.items():
        for sup in supports:
            shds.append(graph_metrics(sup, truth).shd)
    return DynamicMetrics(
        direction_accuracy=dir_hits / dir_total if dir_total else 1.0,
        temporal_correlation=float(np.mean(corrs)) if corrs else 0.0,
        temporal_mse=float(np.mean(mses)) if mses else 0.0,
        dynamic_shd=float(np.mean(shds)) if shds else 0.0,
    )


def intervention_metrics(estimates: pd.DataFrame,
                         recommendations: pd.DataFrame) -> InterventionMetrics:
    """Sign agreement of rollout effects plus mean rank-1 rollout change.

    `estimates` needs columns (patient_id, window, action, rollout_delta,
    direction); `recommendations` needs (patient_id, window, rank, action).
    """
    signs = np.sign(estimates["rollout_delta"].to_numpy())
    expected = estimates["direction"].to_numpy()
    accuracy = float((signs == expected).mean())

    top = recommendations[recommendations["rank"] == 1]
    merged = top.merge(estimates, on=["patient_id", "window", "action"], how="left")
    mean_change = float(merged["rollout_delta"].mean()) if len(merged) else 0.0
    return InterventionMetrics(accuracy, mean_change)


def recommendation_metrics(recommendations: pd.DataFrame, n_windows: int,
                           latent: pd.DataFrame,
                           sequences: dict[int, DynamicGraphSequence]) -> RecommendationMetrics:
    """Coverage, mean rank-1 effect, and mechanical explanation faithfulness.

    A recommendation is faithful when its cited edge weight matches the
    dynamic snapshot, its effect sign matches the cited direction, and its
    latent state matches the window's label.
    """
    covered = recommendations.groupby(["patient_id", "window"]).size()
    coverage = len(covered) / n_windows if n_windows else 0.0
    top = recommendations[recommendations["rank"] == 1]
    mean_effect = float(top["effect"].mean()) if len(top) else 0.0

    labels = {(int(r.patient_id), int(r.window)): int(r.state)
              for r in latent.itertuples(index=False)}
    faithful = 0
    for row in recommendations.itertuples(index=False):
        pid, q = int(row.patient_id), int(row.window)
        snap = sequences[pid].snapshot_weights(q)
        edge = (row.edge_source, row.edge_target)
        ok = (edge in snap
              and abs(snap[edge] - row.edge_weight) < 1e-9
              and np.sign(row.effect) == row.direction
              and labels.get((pid, q)) == int(row.latent_state))
        faithful += bool(ok)
    faithfulness = faithful / len(recommendations) if len(recommendations) else 1.0
    return RecommendationMetrics(coverage, mean_effect, faithfulness)


def baseline_naive_patient(series_std: np.ndarray,
                           variables: tuple[str, ...] = VARIABLES,
                           threshold: float = 0.15,
                           ridge: float = 1e-6) -> EdgeList:
    """Unconstrained per-patient lag-1 ridge graph, thresholded on |coef|."""
    d = series_std.shape[1]
    edges: EdgeList = []
    for v in range(d):
        parents = [u for u in range(d) if u != v]
        x = series_std[:-1, parents]
        y = series_std[1:, v]
        beta = np.linalg.solve(x.T @ x + ridge * np.eye(len(parents)), x.T @ y)
        for u, b in zip(parents, beta):
            if abs(b) > threshold:
                edges.append(Edge(variables[u], variables[v],
                                  float(min(abs(b), 1.0)), "naive"))
    return edges


def baseline_rolling_corr(series: np.ndarray, window: int, step: int,
                          threshold: float = 0.30,
                          variables: tuple[str, ...] = VARIABLES,
                          patient_id: int = -1) -> DynamicGraphSequence:
    """Per-window |lagged Pearson correlation| graphs, no smoothing."""
    ranges = window_ranges(series.shape[0], window, step)
    d = series.shape[1]
    pairs = [(variables[u], variables[v])
             for u in range(d) for v in range(d) if u != v]
    history = {p: np.zeros(len(ranges)) for p in pairs}
    snapshots: list[EdgeList] = []
    for q, (start, end) in enumerate(ranges):
        seg = series[start:end]
        snapshot: EdgeList = []
        for u in range(d):
            for v in range(d):
                if u == v:
                    continue
                xs, ys = seg[:-1, u], seg[1:, v]
                if xs.std() < 1e-12 or ys.std() < 1e-12:
                    w = 0.0
                else:
                    w = float(abs(np.corrcoef(xs, ys)[0, 1]))
                key = (variables[u], variables[v])
                history[key][q] = w
                if w >= threshold:
                    snapshot.append(Edge(*key, min(w, 1.0), "rolling_corr"))
        snapshots.append(snapshot)
    volatility = np.ones((len(ranges), d))
    return DynamicGraphSequence(patient_id, ranges, snapshots, history, volatility)


EXPECTED_AUDIT_KEYS = (
    "population_edges", "patient_graphs", "patients_with_dynamic_sequences",
    "latent_windows", "counterfactual_rows", "recommendation_rows",
)


def audit(result) -> dict[str, int]:
    """Artifact counts for a completed pipeline run (see pipeline.PipelineResult)."""
    stages = {
        "population_edges": result.population_edges,
        "patient_graphs": result.patient_graphs,
        "patients_with_dynamic_sequences": result.sequences,
        "latent_windows": result.latent_table,
        "counterfactual_rows": result.estimates,
        "recommendation_rows": result.recommendations,
    }
    for name, artifact in stages.items():
        if artifact is None:
            raise ValueError(f"missing artifact for audit stage {name!r}")
    return {
        "population_edges": len(result.population_edges),
        "patient_graphs": len(result.patient_graphs),
        "patients_with_dynamic_sequences": len(result.sequences),
        "latent_windows": len(result.latent_table),
        "counterfactual_rows": len(result.estimates),
        "recommendation_rows": len(result.recommendations),
    }


def run_ablations(bundle, config) -> pd.DataFrame:
    """Metric suite for the full model and its four ablation variants.

    Variants: no population prior (naive per-patient scaffold), no
    personalization (thresholded population graph), no dynamic graph (frozen
    personalized weights; temporal correlation reported as 0), no latent
    states (risk multiplier fixed at 1).
    """
    from . import pipeline  # deferred: pipeline imports this module

    rows = []
    for variant in ("full", "no_population_prior", "no_personalization",
                    "no_dynamic_graph", "no_latent_states"):
        result = pipeline.run(config, bundle=bundle, variant=variant)
        metrics = result.metrics
        rows.append({
            "variant": variant,
            "f1": metrics["personalized_graph"]["f1"],
            "precision": metrics["personalized_graph"]["precision"],
            "recall": metrics["personalized_graph"]["recall"],
            "shd": metrics["personalized_graph"]["shd"],
            "temporal_correlation": metrics["dynamic"]["temporal_correlation"],
            "direction_accuracy": metrics["dynamic"]["direction_accuracy"],
            "intervention_direction_accuracy":
                metrics["intervention"]["direction_accuracy"],
            "mean_glucose_change": metrics["intervention"]["mean_glucose_change"],
            "coverage": metrics["recommendation"]["coverage"],
            "mean_effect": metrics["recommendation"]["mean_effect"],
            "faithfulness": metrics["recommendation"]["faithfulness"],
        })
    return pd.DataFrame(rows)
