"""Counterfactual engine: rollouts, scoring, ranking, explanations."""
import numpy as np
import pytest

from caregraph.intervene import (Action, DEFAULT_ACTIONS, InterveneConfig,
                                 InterventionEstimate, explain, recommend,
                                 rollout_effect, score_action,
                                 window_lag_coeffs)
from caregraph.simgen import VARIABLES, VAR_INDEX


def test_default_actions_and_directions():
    names = [(a.variable, a.delta) for a in DEFAULT_ACTIONS]
    assert names == [("steps", 1000.0), ("adherence", 0.08), ("sleep", 0.5),
                     ("stress", -0.05), ("inflammation", -0.05)]
    # every default action is expected to lower glucose
    assert all(a.direction == -1 for a in DEFAULT_ACTIONS)
    assert Action("stress", 0.05).direction == 1
    assert Action("steps", 1000.0).name == "steps+1000"
    assert Action("stress", -0.05).name == "stress-0.05"


def test_window_lag_coeffs():
    b = [np.full((6, 6), 0.4), np.full((6, 6), 0.2)]
    zero = window_lag_coeffs({}, b, VARIABLES)
    assert all(np.all(m == 0.0) for m in zero)

    snap = {("stress", "glucose"): 0.5}
    out = window_lag_coeffs(snap, b, VARIABLES)
    i, j = VAR_INDEX["stress"], VAR_INDEX["glucose"]
    assert out[0][i, j] == pytest.approx(0.2)
    assert out[1][i, j] == pytest.approx(0.1)
    assert out[0].sum() == pytest.approx(0.2)


def single_edge_coeffs(src, tgt, c, lag=1):
    coeffs = [np.zeros((6, 6)) for _ in range(lag)]
    coeffs[0][VAR_INDEX[src], VAR_INDEX[tgt]] = c
    return coeffs


def test_rollout_equal_arms_zero_and_single_edge():
    rng = np.random.default_rng(0)
    history = rng.normal(size=(3, 6))
    coeffs = single_edge_coeffs("stress", "glucose", 0.37)
    var = VAR_INDEX["stress"]
    assert np.all(rollout_effect(history, coeffs, var, 0.8, 0.8, 3) == 0.0)

    # h=1 single edge: effect on the target is c * (a - a')
    eff = rollout_effect(history, coeffs, var, 1.5, 0.5, 1)
    assert eff[VAR_INDEX["glucose"]] == pytest.approx(0.37, abs=1e-12)
    others = [i for i in range(6) if i not in (VAR_INDEX["glucose"], var)]
    assert np.allclose(eff[others], 0.0)

    # no outgoing edges from the intervened variable -> no effect elsewhere
    eff = rollout_effect(history, single_edge_coeffs("sleep", "glucose", 0.4),
                         var, 1.5, 0.5, 1)
    assert np.allclose(np.delete(eff, var), 0.0)

    assert np.all(rollout_effect(history, [np.zeros((6, 6))], var, 2.0, 0.0, 4)
                  [np.arange(6) != var] == 0.0)


def test_rollout_linearity():
    rng = np.random.default_rng(1)
    history = rng.normal(size=(4, 6))
    coeffs = [rng.normal(scale=0.3, size=(6, 6)) for _ in range(2)]
    var = VAR_INDEX["adherence"]
    unit = rollout_effect(history, coeffs, var, 1.0, 0.0, 3)
    for a, a_prime in ((0.7, -0.3), (2.0, 2.0), (-1.0, 0.5)):
        eff = rollout_effect(history, coeffs, var, a, a_prime, 3)
        assert np.allclose(eff, (a - a_prime) * unit, atol=1e-9)


def test_rollout_errors():
    history = np.zeros((1, 6))
    coeffs = [np.zeros((6, 6))] * 2
    with pytest.raises(ValueError, match="horizon"):
        rollout_effect(history, coeffs, 0, 1.0, 0.0, 0)
    with pytest.raises(ValueError, match="history"):
        rollout_effect(history, coeffs, 0, 1.0, 0.0, 2)


def test_score_action_example():
    config = InterveneConfig()
    sds = np.ones(6)
    sds[VAR_INDEX["adherence"]] = 0.08  # delta 0.08 -> delta_std = 1
    action = Action("adherence", 0.08)
    snap = {("adherence", "glucose"): 0.5}
    assert score_action(sds, snap, action, 0.4, config) == pytest.approx(-0.6, abs=1e-12)
    assert score_action(sds, {}, action, 0.4, config) == 0.0
    # linear risk multiplier: risk 0 -> x1.0, risk 2 -> x2.0
    lo = score_action(sds, snap, action, 0.0, config)
    hi = score_action(sds, snap, action, 2.0, config)
    assert hi == pytest.approx(2.0 * lo, abs=1e-12)


def estimates_with_effects(effects):
    out = []
    for action, eff in zip(DEFAULT_ACTIONS, effects):
        out.append(InterventionEstimate(0, 0, action, 3, eff, eff, 0.5))
    return out


def test_recommend_filter_sort_topk():
    config = InterveneConfig()
    recs = recommend(estimates_with_effects([-0.6, -0.3, -0.1, -0.04, 0.2]),
                     {}, 1, config)
    assert [r.effect for r in recs] == [-0.6, -0.3, -0.1]
    assert [r.rank for r in recs] == [1, 2, 3]

    assert recommend(estimates_with_effects([-0.04, -0.01, 0.3]), {}, 1, config) == []

    # tie-break on action name
    tied = recommend(estimates_with_effects([-0.3, -0.3]), {}, 1, config)
    assert [r.action.name for r in tied] == sorted(r.action.name for r in tied)


def test_explain_sentence_fields():
    config = InterveneConfig()
    est = InterventionEstimate(4, 2, Action("adherence", 0.08), 3, -0.2, -0.31, 0.5)
    snap = {("adherence", "glucose"): 0.41}
    rec = recommend([est], snap, 2, config)[0]
    assert rec.edge == ("adherence", "glucose")
    assert rec.edge_weight == pytest.approx(0.41)
    assert rec.direction == -1
    assert rec.latent_state == 2
    text = explain(rec)
    assert "adherence->glucose" in text
    assert "decrease" in text
    assert "state 2" in text
    assert "0.310" in text
