"""Patient-state table construction: imputation and standardization regimes.

The table format is one row per (patient, time) with one column per dynamic
variable, sorted by (patient_id, time). Standardization always uses the
population SD (divide by n) with a small floor to guard constant columns.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

EPS_SD = 1e-8

SCOPES = ("cohort", "patient", "window")


@dataclass
class Moments:
    """Per-variable moments used to invert a standardization.

    For cohort scope, `mean`/`sd` map variable -> scalar. For patient and
    window scope they map (patient_id, variable) -> scalar.
    """

    scope: str
    mean: dict
    sd: dict


def sort_table(df: pd.DataFrame) -> pd.DataFrame:
    out = df.sort_values(["patient_id", "time"], kind="mergesort").reset_index(drop=True)
    dup = out.duplicated(subset=["patient_id", "time"])
    if dup.any():
        raise ValueError("duplicate (patient_id, time) rows; aggregate first")
    return out


def aggregate_duplicates(df: pd.DataFrame, variables: list[str]) -> pd.DataFrame:
    """Collapse duplicate (patient, time) rows by per-variable mean.

    Hook for external event-level tables; the simulator never produces
    duplicates.
    """
    other = [c for c in df.columns if c not in variables and c not in ("patient_id", "time")]
    agg = {v: "mean" for v in variables}
    agg.update({c: "first" for c in other})
    out = df.groupby(["patient_id", "time"], as_index=False).agg(agg)
    return sort_table(out)


def lower_median(values: np.ndarray) -> float:
    """Median with deterministic lower tie-break for even counts."""
    vals = np.sort(np.asarray(values, dtype=float))
    vals = vals[~np.isnan(vals)]
    if vals.size == 0:
        raise ValueError("no observed values")
    return float(vals[(vals.size - 1) // 2])


def impute(df: pd.DataFrame, variables: list[str]) -> pd.DataFrame:
    """Forward/backward fill within patient, then cohort-median fill.

    Raises if a variable has no observed value anywhere in the cohort.
    """
    out = sort_table(df).copy()
    for var in variables:
        if out[var].isna().all():
            raise ValueError(f"variable {var!r} missing for the entire cohort")
        out[var] = out.groupby("patient_id")[var].transform(lambda s: s.ffill().bfill())
        if out[var].isna().any():
            out[var] = out[var].fillna(lower_median(out[var].to_numpy()))
    return out


def _floored(sd: float) -> float:
    return max(float(sd), EPS_SD)


def standardize(df: pd.DataFrame, variables: list[str],
                scope: str = "cohort") -> tuple[pd.DataFrame, Moments]:
    """Standardize variables over the requested scope.

    `cohort` pools all rows; `patient` (and `window`, for a table that is
    already a single window's rows per patient) computes moments per patient.
    Returns the standardized table and the moments needed for inversion.
    """
    if scope not in SCOPES:
        raise ValueError(f"unknown scope {scope!r}")
    if len(df) == 0:
        raise ValueError("empty table")
    out = df.copy()
    mean: dict = {}
    sd: dict = {}
    if scope == "cohort":
        for var in variables:
            m = float(out[var].mean())
            s = float(out[var].std(ddof=0))
            mean[var], sd[var] = m, s
            out[var] = (out[var] - m) / _floored(s)
    else:
        for pid, group in df.groupby("patient_id"):
            if len(group) == 0:
                raise ValueError(f"empty segment for patient {pid}")
            for var in variables:
                m = float(group[var].mean())
                s = float(group[var].std(ddof=0))
                mean[(pid, var)], sd[(pid, var)] = m, s
                out.loc[group.index, var] = (group[var] - m) / _floored(s)
    return out, Moments(scope=scope, mean=mean, sd=sd)


def invert(df: pd.DataFrame, variables: list[str], moments: Moments) -> pd.DataFrame:
    """Undo `standardize` using the returned moments."""
    out = df.copy()
    if moments.scope == "cohort":
        for var in variables:
            out[var] = df[var] * _floored(moments.sd[var]) + moments.mean[var]
    else:
        for pid, group in df.groupby("patient_id"):
            for var in variables:
                key = (pid, var)
                out.loc[group.index, var] = (
                    group[var] * _floored(moments.sd[key]) + moments.mean[key]
                )
    return out


def standardize_array(values: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Columnwise z-scoring of a (T, d) array with floored population SD.

    Used for within-patient and within-window standardization on raw arrays.
    Returns (z, means, sds) with the unfloored sds.
    """
    arr = np.asarray(values, dtype=float)
    means = arr.mean(axis=0)
    sds = arr.std(axis=0)
    z = (arr - means) / np.maximum(sds, EPS_SD)
    return z, means, sds


def cohort_tensor(df: pd.DataFrame, variables: list[str]) -> tuple[list[int], np.ndarray]:
    """Stack a rectangular cohort table into (patient_ids, (N, T, d) array)."""
    table = sort_table(df)
    ids = sorted(table["patient_id"].unique().tolist())
    lengths = table.groupby("patient_id").size()
    if lengths.nunique() != 1:
        raise ValueError("cohort tensor requires equal-length trajectories")
    t_len = int(lengths.iloc[0])
    arr = table[variables].to_numpy(dtype=float).reshape(len(ids), t_len, len(variables))
    return ids, arr
