"""Semi-synthetic longitudinal health cohort generator with known causal ground truth.

Generates per-patient trajectories of six dynamic variables (steps, sleep,
adherence, stress, inflammation, glucose) from clipped lagged structural
equations, with a mid-trajectory regime shift, optional behavioral
interventions, and patient-level heterogeneity via per-edge coefficient
multipliers. The true directed edge set, per-patient strengths, and
regime-dependent strength trajectories are emitted alongside the data so
downstream graph learning can be scored exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

VARIABLES = ("steps", "sleep", "adherence", "stress", "inflammation", "glucose")
VAR_INDEX = {name: i for i, name in enumerate(VARIABLES)}

# The seven pathways that constitute the evaluation ground truth.
GROUND_TRUTH_EDGES = (
    ("sleep", "stress"),
    ("steps", "stress"),
    ("adherence", "glucose"),
    ("stress", "glucose"),
    ("inflammation", "glucose"),
    ("sleep", "glucose"),
    ("steps", "glucose"),
)

# Signed structural coefficients on cross-variable terms. The simulator also
# uses adherence->inflammation and inflammation->stress terms; these are real
# generative pathways but deliberately absent from the 7-edge ground truth
# (recovering them counts as a false positive).
CROSS_COEFFS = {
    ("adherence", "inflammation"): -0.04,
    ("sleep", "stress"): -0.17,  # enters through the hinge 0.17*[7.5 - sleep]+
    ("inflammation", "stress"): 0.08,
    ("steps", "stress"): -3.5e-5,
    ("stress", "glucose"): 9.5,
    ("inflammation", "glucose"): 8.5,
    ("adherence", "glucose"): -5.0,
    ("steps", "glucose"): -3.5e-4,
    ("sleep", "glucose"): -0.9,
}
CROSS_EDGE_ORDER = tuple(sorted(CROSS_COEFFS))

# Multiplicative coefficient rescaling active in regime 1, so that dynamic
# tracking has a nontrivial target beyond the additive regime terms. Only
# positive-coefficient pathways are scaled: dynamic edge weights move with the
# signed local regression coefficient, so a negative pathway's weight would
# move opposite to its absolute strength and the tracking oracle would be
# anti-correlated with any faithful estimate by construction.
REGIME1_SCALE = {
    ("stress", "glucose"): 0.3,
    ("inflammation", "glucose"): 3.0,
}

# Behavioral draw spreads and clip ranges.
STEPS_SD, STEPS_CLIP = 1500.0, (1000.0, 20000.0)
SLEEP_SD, SLEEP_CLIP = 0.8, (3.0, 11.0)
ADHERENCE_SD, ADHERENCE_CLIP = 0.08, (0.0, 1.0)

# Physiological clip bounds.
INFLAMMATION_CLIP = (0.02, 1.5)
STRESS_CLIP = (0.03, 1.8)
GLUCOSE_CLIP = (75.0, 260.0)

# Glucose noise lives on a mg/dL scale, so its noise is scaled up.
GLUCOSE_NOISE_SCALE = 10.0

# Intervention onset window (inclusive bounds), guaranteeing pre/post data.
ONSET_MIN_OFFSET = 10

# Unrecorded warm-up steps before t=0, so recorded trajectories start near the
# stationary distribution instead of at the arbitrary initial conditions.
BURN_IN_STEPS = 12


@dataclass(frozen=True)
class SimConfig:
    """Configuration of the semi-synthetic benchmark."""

    n_patients: int = 120
    n_steps: int = 60
    noise_std: float = 0.12
    intervention_fraction: float = 0.25
    seed: int = 7
    regime_shift_step: int = 30

    def validate(self) -> None:
        if self.n_patients <= 0:
            raise ValueError("n_patients must be positive")
        if not 0.0 <= self.intervention_fraction <= 1.0:
            raise ValueError("intervention_fraction must be in [0, 1]")
        if self.n_steps <= self.regime_shift_step:
            raise ValueError(
                f"n_steps ({self.n_steps}) must exceed regime_shift_step "
                f"({self.regime_shift_step})"
            )
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")


@dataclass(frozen=True)
class StaticProfile:
    """Static covariates and per-edge heterogeneity for one patient."""

    patient_id: int
    age: float
    sex: int
    bmi: float
    glucose_baseline: float
    coef_multipliers: dict[tuple[str, str], float]


@dataclass
class Trajectory:
    """One patient's generated series plus regime/intervention indicators."""

    patient_id: int
    values: np.ndarray  # (n_steps, 6) in VARIABLES order
    regime: np.ndarray  # (n_steps,) binary
    intervention: np.ndarray  # (n_steps,) binary


@dataclass
class GroundTruth:
    """Causal ground truth sidecar for a generated cohort."""

    edge_set: frozenset[tuple[str, str]]
    expected_directions: dict[tuple[str, str], int]
    per_patient_strengths: dict[tuple[int, tuple[str, str]], float]
    regime_strengths: dict[tuple[tuple[str, str], int], float]
    cohort_sds: dict[str, float]


@dataclass
class CohortBundle:
    """Generated cohort: trajectories, profiles, and the ground truth."""

    config: SimConfig
    trajectories: list[Trajectory]
    profiles: list[StaticProfile]
    ground_truth: GroundTruth

    def tensor(self) -> np.ndarray:
        """Stack trajectories into an (n_patients, n_steps, 6) array."""
        return np.stack([t.values for t in self.trajectories])

    def to_frame(self) -> pd.DataFrame:
        """One row per (patient, time) with dynamic variables, regime, intervention."""
        rows = []
        for traj in self.trajectories:
            n = traj.values.shape[0]
            frame = pd.DataFrame(traj.values, columns=list(VARIABLES))
            frame.insert(0, "time", np.arange(n))
            frame.insert(0, "patient_id", traj.patient_id)
            frame["regime"] = traj.regime
            frame["intervention"] = traj.intervention
            rows.append(frame)
        return pd.concat(rows, ignore_index=True)

    def profiles_frame(self) -> pd.DataFrame:
        records = []
        for p in self.profiles:
            rec = {
                "patient_id": p.patient_id,
                "age": p.age,
                "sex": p.sex,
                "bmi": p.bmi,
                "glucose_baseline": p.glucose_baseline,
            }
            for edge in CROSS_EDGE_ORDER:
                rec[f"mult_{edge[0]}_{edge[1]}"] = p.coef_multipliers[edge]
            records.append(rec)
        return pd.DataFrame(records)


def expected_direction(source: str, target: str) -> int:
    """Sign of the ground-truth effect of `source` on `target`.

    Only defined for the seven ground-truth pathways (which include every
    candidate action variable against glucose).
    """
    if (source, target) not in GROUND_TRUTH_EDGES:
        raise ValueError(f"no expected direction for pair ({source}, {target})")
    return 1 if CROSS_COEFFS[(source, target)] > 0 else -1


def _edge_coeff(edge: tuple[str, str], regime: int,
                multipliers: dict[tuple[str, str], float] | None = None) -> float:
    c = CROSS_COEFFS[edge]
    if multipliers is not None:
        c *= multipliers[edge]
    if regime:
        c *= REGIME1_SCALE.get(edge, 1.0)
    return c


def draw_behavioral(profile: StaticProfile, z: int, u: int,
                    rng: np.random.Generator,
                    noise_scale: float = 1.0) -> tuple[float, float, float]:
    """Draw (steps, sleep, adherence) from clipped normals.

    Means shift with the regime indicator z and the intervention indicator u;
    `noise_scale` rescales the draw spreads (0 gives the means exactly).
    """
    mu_steps = 7200.0 - 350.0 * z + 250.0 * u
    mu_sleep = 7.1 - 0.35 * z + 0.18 * u
    mu_adh = 0.80 - 0.03 * z + 0.10 * u
    steps = np.clip(mu_steps + noise_scale * STEPS_SD * rng.standard_normal(), *STEPS_CLIP)
    sleep = np.clip(mu_sleep + noise_scale * SLEEP_SD * rng.standard_normal(), *SLEEP_CLIP)
    adh = np.clip(mu_adh + noise_scale * ADHERENCE_SD * rng.standard_normal(), *ADHERENCE_CLIP)
    return float(steps), float(sleep), float(adh)


def step_physiology(prev_state: tuple[float, float, float],
                    behavioral: tuple[float, float, float],
                    profile: StaticProfile, z: int,
                    rng: np.random.Generator,
                    noise_std: float = 0.0) -> tuple[float, float, float]:
    """Advance (inflammation, stress, glucose) one step.

    `prev_state` is the previous (inflammation, stress, glucose); `behavioral`
    is the current (steps, sleep, adherence). Cross-variable coefficients are
    scaled by the patient's per-edge multipliers and the regime scaling.
    """
    inflam_prev, stress_prev, glucose_prev = prev_state
    steps, sleep, adh = behavioral
    mult = profile.coef_multipliers

    eps_i = noise_std * rng.standard_normal() if noise_std else 0.0
    eps_s = noise_std * rng.standard_normal() if noise_std else 0.0
    eps_g = GLUCOSE_NOISE_SCALE * noise_std * rng.standard_normal() if noise_std else 0.0

    inflam = np.clip(
        0.70 * inflam_prev
        + 0.012 * max(profile.bmi - 25.0, 0.0)
        + 0.05 * z
        + _edge_coeff(("adherence", "inflammation"), z, mult) * adh
        + eps_i,
        *INFLAMMATION_CLIP,
    )
    stress = np.clip(
        0.62 * stress_prev
        - _edge_coeff(("sleep", "stress"), z, mult) * max(7.5 - sleep, 0.0)
        + _edge_coeff(("inflammation", "stress"), z, mult) * inflam
        + _edge_coeff(("steps", "stress"), z, mult) * steps
        + 0.03 * z
        + eps_s,
        *STRESS_CLIP,
    )
    glucose = np.clip(
        0.60 * glucose_prev
        + 0.30 * profile.glucose_baseline
        + _edge_coeff(("stress", "glucose"), z, mult) * stress
        + _edge_coeff(("inflammation", "glucose"), z, mult) * inflam
        + _edge_coeff(("adherence", "glucose"), z, mult) * adh
        + _edge_coeff(("steps", "glucose"), z, mult) * steps
        + _edge_coeff(("sleep", "glucose"), z, mult) * (sleep - 7.0)
        + 2.5 * z
        + eps_g,
        *GLUCOSE_CLIP,
    )
    return float(inflam), float(stress), float(glucose)


def _sample_profile(patient_id: int, rng: np.random.Generator) -> StaticProfile:
    age = float(rng.uniform(30.0, 75.0))
    sex = int(rng.integers(0, 2))
    bmi = float(np.clip(rng.normal(27.0, 4.0), 18.0, 40.0))
    baseline = float(np.clip(rng.normal(120.0, 12.0), 90.0, 160.0))
    multipliers = {
        edge: float(np.clip(rng.normal(1.0, 0.15), 0.5, 1.5))
        for edge in CROSS_EDGE_ORDER
    }
    return StaticProfile(patient_id, age, sex, bmi, baseline, multipliers)


def _simulate_patient(config: SimConfig, profile: StaticProfile,
                      onset: int | None) -> Trajectory:
    rng = np.random.default_rng([config.seed, 1000003 + profile.patient_id])
    n = config.n_steps
    values = np.zeros((n, len(VARIABLES)))
    regime = (np.arange(n) >= config.regime_shift_step).astype(np.int8)
    interv = np.zeros(n, dtype=np.int8)
    if onset is not None:
        interv[onset:] = 1

    inflam = float(rng.uniform(0.1, 0.5))
    stress = float(rng.uniform(0.2, 0.8))
    glucose = profile.glucose_baseline
    for _ in range(BURN_IN_STEPS):
        behavioral = draw_behavioral(profile, 0, 0, rng)
        inflam, stress, glucose = step_physiology(
            (inflam, stress, glucose), behavioral, profile, 0, rng,
            noise_std=config.noise_std,
        )
    for t in range(n):
        z, u = int(regime[t]), int(interv[t])
        behavioral = draw_behavioral(profile, z, u, rng)
        if t > 0:
            inflam, stress, glucose = step_physiology(
                (inflam, stress, glucose), behavioral, profile, z, rng,
                noise_std=config.noise_std,
            )
        values[t, :3] = behavioral
        values[t, 3:] = (stress, inflam, glucose)
    # VARIABLES order is (steps, sleep, adherence, stress, inflammation, glucose)
    return Trajectory(profile.patient_id, values, regime, interv)


def sample_cohort(config: SimConfig) -> CohortBundle:
    """Generate the full cohort deterministically from `config.seed`."""
    config.validate()
    root = np.random.default_rng([config.seed, 0])
    n_int = int(round(config.n_patients * config.intervention_fraction))
    chosen = np.sort(root.choice(config.n_patients, size=n_int, replace=False))
    onset_hi = config.n_steps - ONSET_MIN_OFFSET
    onsets = {
        int(pid): int(root.integers(ONSET_MIN_OFFSET, onset_hi + 1))
        for pid in chosen
    }

    profiles, trajectories = [], []
    for pid in range(config.n_patients):
        prof_rng = np.random.default_rng([config.seed, 2000003 + pid])
        profile = _sample_profile(pid, prof_rng)
        profiles.append(profile)
        trajectories.append(_simulate_patient(config, profile, onsets.get(pid)))

    truth = _build_ground_truth(trajectories, profiles)
    return CohortBundle(config, trajectories, profiles, truth)


def _build_ground_truth(trajectories: list[Trajectory],
                        profiles: list[StaticProfile]) -> GroundTruth:
    stacked = np.concatenate([t.values for t in trajectories], axis=0)
    sds = {v: float(max(stacked[:, VAR_INDEX[v]].std(), 1e-12)) for v in VARIABLES}

    directions = {e: expected_direction(*e) for e in GROUND_TRUTH_EDGES}
    per_patient = {}
    for prof in profiles:
        for edge in GROUND_TRUTH_EDGES:
            src, tgt = edge
            per_patient[(prof.patient_id, edge)] = abs(
                _edge_coeff(edge, 0, prof.coef_multipliers)
            ) * sds[src] / sds[tgt]
    regime_strengths = {}
    for edge in GROUND_TRUTH_EDGES:
        src, tgt = edge
        for z in (0, 1):
            regime_strengths[(edge, z)] = abs(_edge_coeff(edge, z)) * sds[src] / sds[tgt]
    return GroundTruth(
        edge_set=frozenset(GROUND_TRUTH_EDGES),
        expected_directions=directions,
        per_patient_strengths=per_patient,
        regime_strengths=regime_strengths,
        cohort_sds=sds,
    )


def regime_strength_trajectory(bundle: CohortBundle, patient_id: int,
                               edge: tuple[str, str],
                               windows: list[tuple[int, int]]) -> np.ndarray:
    """Ground-truth standardized edge strength per window.

    The per-window value is the time-fraction-weighted average of the two
    regime-effective strengths (|coefficient x patient multiplier| rescaled by
    the cohort SD ratio of source over target).
    """
    if edge not in bundle.ground_truth.edge_set:
        raise ValueError(f"{edge} is not a ground-truth edge")
    prof = bundle.profiles[patient_id]
    src, tgt = edge
    sds = bundle.ground_truth.cohort_sds
    strengths = {
        z: abs(_edge_coeff(edge, z, prof.coef_multipliers)) * sds[src] / sds[tgt]
        for z in (0, 1)
    }
    shift = bundle.config.regime_shift_step
    out = np.zeros(len(windows))
    for i, (start, end) in enumerate(windows):
        steps = np.arange(start, end)
        frac1 = float(np.mean(steps >= shift))
        out[i] = (1.0 - frac1) * strengths[0] + frac1 * strengths[1]
    return out
