"""End-to-end pipeline orchestration (in-memory stage composition).

The CLI wraps these stage functions with artifact I/O; tests and the ablation
runner call them directly. Every stage is deterministic given the run
configuration, and per-patient stages preserve patient ordering regardless of
the worker count.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace, asdict

import numpy as np
import pandas as pd

from . import evalkit
from .dyngraph import DynConfig, DynamicGraphSequence, evolve
from .edges import Edge, EdgeList, support
from .intervene import (Action, InterveneConfig, InterventionEstimate,
                        Recommendation, explain, recommend, rollout_effect,
                        score_action, window_lag_coeffs)
from .latent import ClusterMeta, LatentConfig, build_latent_table
from .persgraph import AdaptConfig, PatientGraph, personalize
from .popgraph import PopulationModel, PriorMask, TrainConfig, export_edges, train
from .simgen import (CohortBundle, GROUND_TRUTH_EDGES, SimConfig, VARIABLES,
                     VAR_INDEX, regime_strength_trajectory, sample_cohort)
from .statetable import cohort_tensor, impute, standardize, standardize_array

FORBIDDEN_EDGES = (("glucose", "steps"), ("glucose", "sleep"), ("glucose", "adherence"))

VARIANTS = ("full", "no_population_prior", "no_personalization",
            "no_dynamic_graph", "no_latent_states")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 7
    sim: SimConfig = field(default_factory=SimConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    adapt: AdaptConfig = field(default_factory=AdaptConfig)
    dyn: DynConfig = field(default_factory=DynConfig)
    latent: LatentConfig = field(default_factory=LatentConfig)
    intervene: InterveneConfig = field(default_factory=InterveneConfig)
    naive_threshold: float = 0.15
    rolling_corr_threshold: float = 0.30
    zero_change_tol: float = 0.01
    workers: int = 1

    def seeded(self) -> "RunConfig":
        """Propagate the global seed into the seed-bearing stage configs."""
        return replace(self,
                       sim=replace(self.sim, seed=self.seed),
                       latent=replace(self.latent, seed=self.seed))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["intervene"]["actions"] = [
            {"variable": a.variable, "delta": a.delta}
            for a in self.intervene.actions
        ]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        kwargs = {}
        for key, sub in (("sim", SimConfig), ("train", TrainConfig),
                         ("adapt", AdaptConfig), ("dyn", DynConfig),
                         ("latent", LatentConfig)):
            if key in data:
                try:
                    kwargs[key] = sub(**data.pop(key))
                except TypeError as err:
                    raise ValueError(f"config section {key!r}: {err}") from err
        if "intervene" in data:
            idata = dict(data.pop("intervene"))
            if "actions" in idata:
                idata["actions"] = tuple(
                    Action(a["variable"], float(a["delta"])) for a in idata["actions"]
                )
            try:
                kwargs["intervene"] = InterveneConfig(**idata)
            except TypeError as err:
                raise ValueError(f"config section 'intervene': {err}") from err
        try:
            return cls(**data, **kwargs)
        except TypeError as err:
            raise ValueError(f"config: {err}") from err


@dataclass
class StateBundle:
    """Prepared views of the cohort used by downstream stages."""

    table_raw: pd.DataFrame
    table_std: pd.DataFrame
    cohort_means: dict[str, float]
    cohort_sds: dict[str, float]
    patient_ids: list[int]
    tensor_std: np.ndarray  # cohort-standardized (N, T, d)
    raw: dict[int, np.ndarray]  # raw (T, d) per patient
    patient_std: dict[int, np.ndarray]  # within-patient standardized (T, d)
    variability: dict[int, dict[str, float]]  # patient SD / cohort SD per variable


@dataclass
class PipelineResult:
    config: RunConfig
    variant: str
    bundle: CohortBundle
    state: StateBundle
    model: PopulationModel
    history: list[dict]
    population_edges: EdgeList
    patient_graphs: dict[int, PatientGraph]
    sequences: dict[int, DynamicGraphSequence]
    latent_table: pd.DataFrame
    cluster_meta: ClusterMeta
    estimates: pd.DataFrame
    recommendations: pd.DataFrame
    metrics: dict
    audit: dict[str, int]


def default_prior_mask() -> PriorMask:
    """Clinical prior: the seven known pathways encouraged, reverse causation
    from glucose into behavior forbidden."""
    return PriorMask(frozenset(GROUND_TRUTH_EDGES), frozenset(FORBIDDEN_EDGES))


def build_state(bundle: CohortBundle) -> StateBundle:
    table = impute(bundle.to_frame(), list(VARIABLES))
    table_std, moments = standardize(table, list(VARIABLES), scope="cohort")
    ids, tensor = cohort_tensor(table_std, list(VARIABLES))
    raw, pstd, variability = {}, {}, {}
    for traj in bundle.trajectories:
        raw[traj.patient_id] = traj.values
        z, _, sds = standardize_array(traj.values)
        pstd[traj.patient_id] = z
        variability[traj.patient_id] = {
            v: float(sds[i] / max(moments.sd[v], 1e-12))
            for i, v in enumerate(VARIABLES)
        }
    return StateBundle(
        table_raw=table,
        table_std=table_std,
        cohort_means={v: moments.mean[v] for v in VARIABLES},
        cohort_sds={v: moments.sd[v] for v in VARIABLES},
        patient_ids=ids,
        tensor_std=tensor,
        raw=raw,
        patient_std=pstd,
        variability=variability,
    )


def fit_population(state: StateBundle, config: TrainConfig):
    mask = default_prior_mask()
    model, history = train(state.tensor_std, mask, config, VARIABLES)
    return model, history, export_edges(model, config)


def _personalize_one(args) -> PatientGraph:
    pid, series, scaffold, variability, config = args
    return personalize(series, scaffold, variability, config, VARIABLES, pid)


def _pmap(fn, items, workers: int):
    if workers <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def adapt_cohort(state: StateBundle, w0: EdgeList, config: AdaptConfig,
                 variant: str = "full", naive_threshold: float = 0.15,
                 workers: int = 1) -> dict[int, PatientGraph]:
    if variant == "no_personalization":
        # every patient keeps the exported (already thresholded) population graph
        kept = [Edge(e.source, e.target, e.weight, "personalized") for e in w0]
        return {pid: PatientGraph(pid, list(kept), {}, {})
                for pid in state.patient_ids}

    jobs = []
    for pid in state.patient_ids:
        if variant == "no_population_prior":
            scaffold = evalkit.baseline_naive_patient(
                state.patient_std[pid], VARIABLES, naive_threshold)
        else:
            scaffold = w0
        jobs.append((pid, state.patient_std[pid], scaffold,
                     state.variability[pid], config))
    graphs = _pmap(_personalize_one, jobs, workers)
    return {g.patient_id: g for g in graphs}


def _frozen_sequence(pgraph: PatientGraph, t_len: int,
                     config: DynConfig) -> DynamicGraphSequence:
    """Degenerate sequence used by the no-dynamic-graph ablation."""
    from .dyngraph import windows as window_ranges
    ranges = window_ranges(t_len, config.window, config.step)
    base = pgraph.weights()
    history = {key: np.full(len(ranges), w) for key, w in base.items()}
    snapshot = [Edge(s, t, w, "dynamic") for (s, t), w in sorted(base.items())
                if w >= config.threshold]
    return DynamicGraphSequence(
        pgraph.patient_id, ranges, [list(snapshot) for _ in ranges],
        history, np.ones((len(ranges), len(VARIABLES))),
    )


def _evolve_one(args) -> DynamicGraphSequence:
    pgraph, series, config = args
    return evolve(pgraph, series, config, VARIABLES)


def evolve_cohort(pgraphs: dict[int, PatientGraph], state: StateBundle,
                  config: DynConfig, variant: str = "full",
                  workers: int = 1) -> dict[int, DynamicGraphSequence]:
    if variant == "no_dynamic_graph":
        return {pid: _frozen_sequence(g, state.patient_std[pid].shape[0], config)
                for pid, g in pgraphs.items()}
    jobs = [(pgraphs[pid], state.patient_std[pid], config)
            for pid in sorted(pgraphs)]
    seqs = _pmap(_evolve_one, jobs, workers)
    return {s.patient_id: s for s in seqs}


def counterfactual_stage(state: StateBundle, model: PopulationModel,
                         sequences: dict[int, DynamicGraphSequence],
                         latent_table: pd.DataFrame,
                         config: InterveneConfig,
                         risk_multiplier_off: bool = False) -> pd.DataFrame:
    """One row per (patient, window, action): rollout and scored effects."""
    if risk_multiplier_off:
        config = replace(config, risk_multiplier_coeff=0.0)
    risk_by_pw = {(int(r.patient_id), int(r.window)): float(r.risk)
                  for r in latent_table.itertuples(index=False)}
    glucose = VAR_INDEX["glucose"]
    idx_by_pid = {pid: i for i, pid in enumerate(state.patient_ids)}
    sd_floor = config.sd_floor_frac * np.array(
        [state.cohort_sds[v] for v in VARIABLES])
    rows = []
    for pid in sorted(sequences):
        seq = sequences[pid]
        series_std = state.tensor_std[idx_by_pid[pid]]
        raw = state.raw[pid]
        for q, (start, end) in enumerate(seq.windows):
            snapshot = seq.snapshot_weights(q)
            coeffs = window_lag_coeffs(snapshot, model.lag_coeffs, VARIABLES)
            history = series_std[end - model.max_lag:end]
            window_sds = np.maximum(raw[start:end].std(axis=0), sd_floor)
            risk = risk_by_pw[(pid, q)]
            for action in config.actions:
                var = VAR_INDEX[action.variable]
                base = float(history[-1, var])
                delta_std = action.delta / max(state.cohort_sds[action.variable], 1e-12)
                effect = rollout_effect(history, coeffs, var, base + delta_std,
                                        base, config.horizon)
                scored = score_action(window_sds, snapshot, action, risk, config)
                rows.append({
                    "patient_id": pid, "window": q, "action": action.name,
                    "variable": action.variable, "delta": action.delta,
                    "horizon": config.horizon,
                    "rollout_delta": float(effect[glucose]),
                    "scored_effect": scored,
                    "risk": risk,
                    "direction": action.direction,
                })
    return pd.DataFrame(rows)


def recommend_stage(estimates: pd.DataFrame,
                    sequences: dict[int, DynamicGraphSequence],
                    latent_table: pd.DataFrame,
                    config: InterveneConfig) -> pd.DataFrame:
    actions = {a.name: a for a in config.actions}
    labels = {(int(r.patient_id), int(r.window)): int(r.state)
              for r in latent_table.itertuples(index=False)}
    rows = []
    for (pid, q), group in estimates.groupby(["patient_id", "window"], sort=True):
        pid, q = int(pid), int(q)
        ests = [
            InterventionEstimate(pid, q, actions[r.action], int(r.horizon),
                                 float(r.rollout_delta), float(r.scored_effect),
                                 float(r.risk))
            for r in group.itertuples(index=False)
        ]
        snapshot = sequences[pid].snapshot_weights(q)
        for rec in recommend(ests, snapshot, labels[(pid, q)], config):
            rows.append({
                "patient_id": pid, "window": q, "rank": rec.rank,
                "action": rec.action.name, "effect": rec.effect,
                "edge_source": rec.edge[0], "edge_target": rec.edge[1],
                "edge_weight": rec.edge_weight, "direction": rec.direction,
                "latent_state": rec.latent_state,
                "explanation": explain(rec),
            })
    columns = ["patient_id", "window", "rank", "action", "effect", "edge_source",
               "edge_target", "edge_weight", "direction", "latent_state",
               "explanation"]
    return pd.DataFrame(rows, columns=columns)


def _true_edge_trajectories(bundle: CohortBundle,
                            sequences: dict[int, DynamicGraphSequence]):
    estimated, oracle = {}, {}
    for pid, seq in sequences.items():
        for edge in GROUND_TRUTH_EDGES:
            if edge in seq.weight_history:
                estimated[(pid, edge)] = seq.weight_history[edge]
                oracle[(pid, edge)] = regime_strength_trajectory(
                    bundle, pid, edge, seq.windows)
    return estimated, oracle


def evaluate_stage(bundle: CohortBundle, state: StateBundle, w0: EdgeList,
                   pgraphs: dict[int, PatientGraph],
                   sequences: dict[int, DynamicGraphSequence],
                   latent_table: pd.DataFrame, estimates: pd.DataFrame,
                   recommendations: pd.DataFrame, config: RunConfig) -> dict:
    truth = set(bundle.ground_truth.edge_set)

    population = evalkit.graph_metrics(support(w0), truth)
    personalized = evalkit.mean_graph_metrics([
        evalkit.graph_metrics(support(g.edges), truth)
        for g in pgraphs.values()
    ])
    naive = evalkit.mean_graph_metrics([
        evalkit.graph_metrics(
            support(evalkit.baseline_naive_patient(
                state.patient_std[pid], VARIABLES, config.naive_threshold)),
            truth)
        for pid in state.patient_ids
    ])

    est_traj, oracle_traj = _true_edge_trajectories(bundle, sequences)
    supports = {pid: [support(s) for s in seq.snapshots]
                for pid, seq in sequences.items()}
    dynamic = evalkit.dynamic_metrics(est_traj, oracle_traj, supports, truth,
                                      config.zero_change_tol)

    rolling = {pid: evalkit.baseline_rolling_corr(
        state.patient_std[pid], config.dyn.window, config.dyn.step,
        config.rolling_corr_threshold, VARIABLES, pid)
        for pid in state.patient_ids}
    roll_est, roll_oracle = {}, {}
    for pid, seq in rolling.items():
        for edge in GROUND_TRUTH_EDGES:
            roll_est[(pid, edge)] = seq.weight_history[edge]
            roll_oracle[(pid, edge)] = regime_strength_trajectory(
                bundle, pid, edge, seq.windows)
    roll_supports = {pid: [support(s) for s in seq.snapshots]
                     for pid, seq in rolling.items()}
    rolling_dynamic = evalkit.dynamic_metrics(
        roll_est, roll_oracle, roll_supports, truth, config.zero_change_tol)

    intervention = evalkit.intervention_metrics(estimates, recommendations)
    n_windows = int(latent_table.shape[0])
    recommendation = evalkit.recommendation_metrics(
        recommendations, n_windows, latent_table, sequences)

    return {
        "population_prior": asdict(population),
        "personalized_graph": asdict(personalized),
        "naive_baseline": asdict(naive),
        "dynamic": asdict(dynamic),
        "rolling_corr_baseline": asdict(rolling_dynamic),
        "intervention": asdict(intervention),
        "recommendation": asdict(recommendation),
    }


def run(config: RunConfig, bundle: CohortBundle | None = None,
        variant: str = "full") -> PipelineResult:
    """Execute the full pipeline and return every intermediate artifact."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    config = config.seeded()
    if bundle is None:
        bundle = sample_cohort(config.sim)
    state = build_state(bundle)
    model, history, w0 = fit_population(state, config.train)
    pgraphs = adapt_cohort(state, w0, config.adapt, variant,
                           config.naive_threshold, config.workers)
    sequences = evolve_cohort(pgraphs, state, config.dyn, variant, config.workers)
    latent_table, cluster_meta = build_latent_table(state.raw, sequences,
                                                    config.latent)
    estimates = counterfactual_stage(
        state, model, sequences, latent_table, config.intervene,
        risk_multiplier_off=(variant == "no_latent_states"))
    recommendations = recommend_stage(estimates, sequences, latent_table,
                                      config.intervene)
    metrics = evaluate_stage(bundle, state, w0, pgraphs, sequences,
                             latent_table, estimates, recommendations, config)
    result = PipelineResult(
        config=config, variant=variant, bundle=bundle, state=state,
        model=model, history=history, population_edges=w0,
        patient_graphs=pgraphs, sequences=sequences,
        latent_table=latent_table, cluster_meta=cluster_meta,
        estimates=estimates, recommendations=recommendations,
        metrics=metrics, audit={},
    )
    result.audit = evalkit.audit(result)
    return result
