"""File-based artifact layer: savers, loaders, and per-stage manifests.

Every stage of the CLI reads its inputs from disk and writes its outputs plus
a JSON manifest (config, input/output content hashes, elapsed time). Data
artifacts are byte-deterministic for a fixed config; manifests carry timings
and are therefore excluded from determinism comparisons.
"""
from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path

import numpy as np
import pandas as pd

from .dyngraph import DynamicGraphSequence
from .edges import Edge, EdgeList, edges_to_frame, frame_to_edges
from .latent import ClusterMeta
from .persgraph import PatientGraph
from .popgraph import PopulationModel
from .simgen import (CROSS_EDGE_ORDER, CohortBundle, GroundTruth, SimConfig,
                     StaticProfile, Trajectory, VARIABLES)

TRAJECTORIES = "trajectories.csv"
PROFILES = "profiles.csv"
GROUND_TRUTH = "ground_truth.json"
POPULATION_EDGES = "population_edges.csv"
POPULATION_MODEL = "population_model.npz"
LOSS_HISTORY = "loss_history.csv"
PATIENT_GRAPH_DIR = "patient_graphs"
PATIENT_GRAPH_SUMMARY = "patient_graph_summary.csv"
DYNAMIC_DIR = "dynamic"
DYNAMIC_INTERNAL_DIR = "dynamic_internal"
LATENT_STATES = "latent_states.csv"
CLUSTER_META = "cluster_meta.json"
ESTIMATES = "intervention_estimates.csv"
RECOMMENDATIONS = "recommendations.csv"
METRICS_JSON = "metrics.json"
METRICS_TXT = "metrics.txt"
ABLATIONS = "ablations.csv"
AUDIT = "audit.json"
MANIFEST_DIR = "manifests"

FLOAT_FMT = "%.12g"


def _write_csv(df: pd.DataFrame, path: Path) -> None:
    df.to_csv(path, index=False, float_format=FLOAT_FMT)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def require(outdir: Path, paths: list[str], producer: str) -> None:
    """Raise if a required upstream artifact is missing, naming its stage."""
    for rel in paths:
        if not (outdir / rel).exists():
            raise FileNotFoundError(
                f"missing artifact {rel!r}; run the {producer!r} stage first"
            )


def write_manifest(outdir: Path, stage: str, config_dict: dict,
                   inputs: list[str], outputs: list[str], elapsed: float) -> None:
    mdir = outdir / MANIFEST_DIR
    mdir.mkdir(parents=True, exist_ok=True)

    def hashes(paths):
        out = {}
        for rel in paths:
            p = outdir / rel
            if p.is_dir():
                for child in sorted(p.glob("*")):
                    out[str(child.relative_to(outdir))] = _sha256(child)
            elif p.exists():
                out[rel] = _sha256(p)
        return out

    manifest = {
        "stage": stage,
        "config": config_dict,
        "inputs": hashes(inputs),
        "outputs": hashes(outputs),
        "elapsed_seconds": elapsed,
    }
    (mdir / f"{stage}.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


class StageTimer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        return False


# ---------------------------------------------------------------- cohort

def save_cohort(bundle: CohortBundle, outdir: Path) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    _write_csv(bundle.to_frame(), outdir / TRAJECTORIES)
    _write_csv(bundle.profiles_frame(), outdir / PROFILES)
    truth = bundle.ground_truth
    payload = {
        "config": {
            "n_patients": bundle.config.n_patients,
            "n_steps": bundle.config.n_steps,
            "noise_std": bundle.config.noise_std,
            "intervention_fraction": bundle.config.intervention_fraction,
            "seed": bundle.config.seed,
            "regime_shift_step": bundle.config.regime_shift_step,
        },
        "edges": sorted(truth.edge_set),
        "expected_directions": {f"{s}|{t}": d for (s, t), d
                                in sorted(truth.expected_directions.items())},
        "per_patient_strengths": {f"{pid}|{s}|{t}": v for (pid, (s, t)), v
                                  in sorted(truth.per_patient_strengths.items())},
        "regime_strengths": {f"{s}|{t}|{z}": v for ((s, t), z), v
                             in sorted(truth.regime_strengths.items())},
        "cohort_sds": truth.cohort_sds,
    }
    (outdir / GROUND_TRUTH).write_text(json.dumps(payload, indent=2, sort_keys=True))


def load_cohort(outdir: Path) -> CohortBundle:
    require(outdir, [TRAJECTORIES, PROFILES, GROUND_TRUTH], "simulate")
    table = pd.read_csv(outdir / TRAJECTORIES)
    prof_table = pd.read_csv(outdir / PROFILES)
    payload = json.loads((outdir / GROUND_TRUTH).read_text())

    config = SimConfig(**payload["config"])
    profiles = []
    for row in prof_table.itertuples(index=False):
        mult = {edge: float(getattr(row, f"mult_{edge[0]}_{edge[1]}"))
                for edge in CROSS_EDGE_ORDER}
        profiles.append(StaticProfile(int(row.patient_id), float(row.age),
                                      int(row.sex), float(row.bmi),
                                      float(row.glucose_baseline), mult))
    trajectories = []
    for pid, group in table.groupby("patient_id", sort=True):
        group = group.sort_values("time")
        trajectories.append(Trajectory(
            int(pid),
            group[list(VARIABLES)].to_numpy(dtype=float),
            group["regime"].to_numpy(dtype=np.int8),
            group["intervention"].to_numpy(dtype=np.int8),
        ))

    def unkey_edge(key):
        s, t = key.split("|")
        return (s, t)

    truth = GroundTruth(
        edge_set=frozenset(tuple(e) for e in payload["edges"]),
        expected_directions={unkey_edge(k): int(v) for k, v
                             in payload["expected_directions"].items()},
        per_patient_strengths={
            (int(k.split("|")[0]), (k.split("|")[1], k.split("|")[2])): float(v)
            for k, v in payload["per_patient_strengths"].items()
        },
        regime_strengths={
            ((k.split("|")[0], k.split("|")[1]), int(k.split("|")[2])): float(v)
            for k, v in payload["regime_strengths"].items()
        },
        cohort_sds={k: float(v) for k, v in payload["cohort_sds"].items()},
    )
    return CohortBundle(config, trajectories, profiles, truth)


# ------------------------------------------------------------ population

def save_population(model: PopulationModel, history: list[dict],
                    edges: EdgeList, outdir: Path) -> None:
    arrays = {"theta": model.theta,
              "variables": np.array(model.variables)}
    for i, b in enumerate(model.lag_coeffs):
        arrays[f"lag_{i}"] = b
    np.savez(outdir / POPULATION_MODEL, **arrays)
    _write_csv(edges_to_frame(edges), outdir / POPULATION_EDGES)
    _write_csv(pd.DataFrame(history), outdir / LOSS_HISTORY)


def load_population(outdir: Path) -> tuple[PopulationModel, EdgeList]:
    require(outdir, [POPULATION_MODEL, POPULATION_EDGES], "fit-population")
    with np.load(outdir / POPULATION_MODEL, allow_pickle=False) as data:
        variables = tuple(str(v) for v in data["variables"])
        lags = sorted(k for k in data.files if k.startswith("lag_"))
        model = PopulationModel(variables, data["theta"],
                                [data[k] for k in lags])
    edges = frame_to_edges(pd.read_csv(outdir / POPULATION_EDGES))
    return model, edges


# -------------------------------------------------------- patient graphs

def save_patient_graphs(pgraphs: dict[int, PatientGraph], outdir: Path) -> None:
    gdir = outdir / PATIENT_GRAPH_DIR
    gdir.mkdir(parents=True, exist_ok=True)
    summary = []
    for pid in sorted(pgraphs):
        g = pgraphs[pid]
        rows = [{
            "source": e.source, "target": e.target, "weight": e.weight,
            "method": e.method,
            "beta": g.betas.get((e.source, e.target), 0.0),
            "granger": g.granger.get((e.source, e.target), 0.0),
        } for e in g.edges]
        frame = pd.DataFrame(rows, columns=["source", "target", "weight",
                                            "method", "beta", "granger"])
        _write_csv(frame, gdir / f"patient_{pid:04d}.csv")
        weights = [e.weight for e in g.edges]
        summary.append({"patient_id": pid, "n_edges": len(g.edges),
                        "mean_weight": float(np.mean(weights)) if weights else 0.0})
    _write_csv(pd.DataFrame(summary), outdir / PATIENT_GRAPH_SUMMARY)


def load_patient_graphs(outdir: Path) -> dict[int, PatientGraph]:
    require(outdir, [PATIENT_GRAPH_DIR, PATIENT_GRAPH_SUMMARY], "adapt")
    out = {}
    for path in sorted((outdir / PATIENT_GRAPH_DIR).glob("patient_*.csv")):
        pid = int(path.stem.split("_")[1])
        frame = pd.read_csv(path)
        edges, betas, granger = [], {}, {}
        for row in frame.itertuples(index=False):
            key = (row.source, row.target)
            edges.append(Edge(row.source, row.target, float(row.weight), row.method))
            betas[key] = float(row.beta)
            granger[key] = float(row.granger)
        out[pid] = PatientGraph(pid, edges, betas, granger)
    return out


# ------------------------------------------------------ dynamic sequences

def save_sequences(sequences: dict[int, DynamicGraphSequence], outdir: Path) -> None:
    ddir = outdir / DYNAMIC_DIR
    idir = outdir / DYNAMIC_INTERNAL_DIR
    ddir.mkdir(parents=True, exist_ok=True)
    idir.mkdir(parents=True, exist_ok=True)
    for pid in sorted(sequences):
        seq = sequences[pid]
        rows = []
        for q, (start, end) in enumerate(seq.windows):
            for e in seq.snapshots[q]:
                rows.append({"window": q, "start": start, "end": end,
                             "source": e.source, "target": e.target,
                             "weight": e.weight, "method": e.method})
        frame = pd.DataFrame(rows, columns=["window", "start", "end", "source",
                                            "target", "weight", "method"])
        _write_csv(frame, ddir / f"patient_{pid:04d}.csv")

        internal = pd.DataFrame({
            "window": np.arange(len(seq.windows)),
            "start": [s for s, _ in seq.windows],
            "end": [e for _, e in seq.windows],
        })
        for key in sorted(seq.weight_history):
            internal[f"w:{key[0]}->{key[1]}"] = seq.weight_history[key]
        for j, var in enumerate(VARIABLES):
            internal[f"vol:{var}"] = seq.volatility[:, j]
        _write_csv(internal, idir / f"patient_{pid:04d}.csv")


def load_sequences(outdir: Path) -> dict[int, DynamicGraphSequence]:
    require(outdir, [DYNAMIC_DIR, DYNAMIC_INTERNAL_DIR], "evolve")
    out = {}
    for path in sorted((outdir / DYNAMIC_INTERNAL_DIR).glob("patient_*.csv")):
        pid = int(path.stem.split("_")[1])
        internal = pd.read_csv(path)
        windows = list(zip(internal["start"].astype(int), internal["end"].astype(int)))
        history = {}
        for col in internal.columns:
            if col.startswith("w:"):
                src, tgt = col[2:].split("->")
                history[(src, tgt)] = internal[col].to_numpy(dtype=float)
        volatility = internal[[f"vol:{v}" for v in VARIABLES]].to_numpy(dtype=float)

        emitted = pd.read_csv(outdir / DYNAMIC_DIR / path.name)
        snapshots = [[] for _ in windows]
        for row in emitted.itertuples(index=False):
            snapshots[int(row.window)].append(
                Edge(row.source, row.target, float(row.weight), row.method))
        out[pid] = DynamicGraphSequence(pid, windows, snapshots, history, volatility)
    return out


# ----------------------------------------------------------- latent etc.

def save_latent(table: pd.DataFrame, meta: ClusterMeta, outdir: Path) -> None:
    _write_csv(table, outdir / LATENT_STATES)
    payload = {
        "n_states": meta.n_states,
        "requested_states": meta.requested_states,
        "centroids": meta.centroids.tolist(),
        "feature_names": meta.feature_names,
        "mean_risk_by_state": meta.mean_risk_by_state,
    }
    (outdir / CLUSTER_META).write_text(json.dumps(payload, indent=2))


def load_latent(outdir: Path) -> tuple[pd.DataFrame, ClusterMeta]:
    require(outdir, [LATENT_STATES, CLUSTER_META], "latent")
    table = pd.read_csv(outdir / LATENT_STATES)
    payload = json.loads((outdir / CLUSTER_META).read_text())
    meta = ClusterMeta(
        n_states=int(payload["n_states"]),
        requested_states=int(payload["requested_states"]),
        centroids=np.asarray(payload["centroids"], dtype=float),
        feature_names=list(payload["feature_names"]),
        mean_risk_by_state=[float(v) for v in payload["mean_risk_by_state"]],
    )
    return table, meta


def save_metrics(metrics: dict, outdir: Path) -> None:
    (outdir / METRICS_JSON).write_text(json.dumps(metrics, indent=2, sort_keys=True))
    lines = []
    for section in sorted(metrics):
        lines.append(f"[{section}]")
        for name, value in sorted(metrics[section].items()):
            lines.append(f"  {name:<24s} {value: .4f}")
        lines.append("")
    (outdir / METRICS_TXT).write_text("\n".join(lines))


def load_metrics(outdir: Path) -> dict:
    require(outdir, [METRICS_JSON], "evaluate")
    return json.loads((outdir / METRICS_JSON).read_text())
