"""Window-level latent risk states.

Per (patient, window): summary features (mean, SD, slope per variable plus
graph summaries), rank-normalized burden scores, a combined risk score, and a
4-way seeded k-means state label re-indexed so that higher labels mean higher
mean risk.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.stats import rankdata
from sklearn.cluster import KMeans

from .dyngraph import DynamicGraphSequence
from .simgen import VAR_INDEX, VARIABLES
from .statetable import EPS_SD

FEATURE_VARS = ("glucose", "stress", "inflammation", "adherence", "steps", "sleep")
GRAPH_FEATURES = ("incoming_glucose_weight", "stress_glucose_weight",
                  "adherence_glucose_weight")


@dataclass(frozen=True)
class LatentConfig:
    n_states: int = 4
    seed: int = 7


@dataclass
class ClusterMeta:
    n_states: int
    requested_states: int
    centroids: np.ndarray  # in standardized feature space, risk-ordered
    feature_names: list[str]
    mean_risk_by_state: list[float]


def feature_names() -> list[str]:
    names = []
    for var in FEATURE_VARS:
        names += [f"{var}_mean", f"{var}_sd", f"{var}_slope"]
    names += list(GRAPH_FEATURES)
    return names


def window_features(window_raw: np.ndarray,
                    snapshot_weights: dict[tuple[str, str], float]) -> np.ndarray:
    """Feature vector for one window of raw values plus its dynamic snapshot."""
    window_raw = np.asarray(window_raw, dtype=float)
    m = window_raw.shape[0]
    if m < 2:
        raise ValueError("window must contain at least 2 steps")
    t = np.arange(m, dtype=float)
    t_centered = t - t.mean()
    denom = float((t_centered ** 2).sum())
    feats = []
    for var in FEATURE_VARS:
        col = window_raw[:, VAR_INDEX[var]]
        slope = float((t_centered * (col - col.mean())).sum() / denom)
        feats += [float(col.mean()), float(col.std()), slope]
    incoming = sum(w for (src, tgt), w in snapshot_weights.items() if tgt == "glucose")
    feats.append(float(incoming))
    feats.append(float(snapshot_weights.get(("stress", "glucose"), 0.0)))
    feats.append(float(snapshot_weights.get(("adherence", "glucose"), 0.0)))
    return np.array(feats)


def rank_normalize(values: np.ndarray) -> np.ndarray:
    """Tie-averaged ranks mapped to [0, 1]; a single value maps to 0.5."""
    values = np.asarray(values, dtype=float)
    n = values.size
    if n == 0:
        raise ValueError("rank_normalize needs at least one value")
    if n == 1:
        return np.array([0.5])
    return (rankdata(values, method="average") - 1.0) / (n - 1.0)


def risk_score(components: np.ndarray) -> np.ndarray:
    """Unweighted mean of burden components (rows = windows)."""
    return np.asarray(components, dtype=float).mean(axis=-1)


def cluster_states(features: np.ndarray, risk: np.ndarray, n_states: int,
                   seed: int) -> tuple[np.ndarray, ClusterMeta]:
    """Seeded k-means on standardized features, labels ordered by mean risk.

    If there are fewer distinct feature vectors than requested states, the
    state count is reduced and recorded in the metadata.
    """
    features = np.asarray(features, dtype=float)
    means = features.mean(axis=0)
    sds = np.maximum(features.std(axis=0), EPS_SD)
    z = (features - means) / sds
    n_distinct = np.unique(z, axis=0).shape[0]
    k = min(n_states, n_distinct)
    km = KMeans(n_clusters=k, init="k-means++", n_init=10, max_iter=100,
                tol=1e-6, random_state=seed)
    raw_labels = km.fit_predict(z)
    order = np.argsort([risk[raw_labels == c].mean() for c in range(k)], kind="stable")
    relabel = np.empty(k, dtype=int)
    relabel[order] = np.arange(k)
    labels = relabel[raw_labels]
    meta = ClusterMeta(
        n_states=k,
        requested_states=n_states,
        centroids=km.cluster_centers_[order],
        feature_names=feature_names(),
        mean_risk_by_state=[float(risk[labels == s].mean()) for s in range(k)],
    )
    return labels, meta


def build_latent_table(raw_trajectories: dict[int, np.ndarray],
                       sequences: dict[int, DynamicGraphSequence],
                       config: LatentConfig) -> tuple[pd.DataFrame, ClusterMeta]:
    """Assemble the full (patient, window) latent-state table for a cohort.

    `raw_trajectories` maps patient id to its raw (T, d) values in VARIABLES
    order; `sequences` holds the dynamic graph sequences at the same window
    resolution.
    """
    rows = []
    feats = []
    for pid in sorted(sequences):
        seq = sequences[pid]
        raw = raw_trajectories[pid]
        for q, (start, end) in enumerate(seq.windows):
            vec = window_features(raw[start:end], seq.snapshot_weights(q))
            feats.append(vec)
            rows.append({"patient_id": pid, "window": q, "start": start, "end": end})
    table = pd.DataFrame(rows)
    feats = np.vstack(feats)
    for i, name in enumerate(feature_names()):
        table[name] = feats[:, i]

    # burden components: rank-normalized window means, adherence inverted
    # because higher adherence is protective
    burdens = np.column_stack([
        rank_normalize(table["glucose_mean"].to_numpy()),
        rank_normalize(table["stress_mean"].to_numpy()),
        rank_normalize(table["inflammation_mean"].to_numpy()),
        1.0 - rank_normalize(table["adherence_mean"].to_numpy()),
    ])
    table["glucose_burden"] = burdens[:, 0]
    table["stress_burden"] = burdens[:, 1]
    table["inflammation_burden"] = burdens[:, 2]
    table["adherence_burden"] = 1.0 - burdens[:, 3]
    table["risk"] = risk_score(burdens)

    labels, meta = cluster_states(feats, table["risk"].to_numpy(),
                                  config.n_states, config.seed)
    table["state"] = labels
    return table, meta
