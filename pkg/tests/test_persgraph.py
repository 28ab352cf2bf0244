"""Patient adaptation: constrained regressions and clipped reweighting."""
import numpy as np
import pytest

from caregraph.edges import Edge, support
from caregraph.persgraph import (AdaptConfig, adapt, fit_patient_ar,
                                 granger_contribution, parent_sets,
                                 personalize)
from caregraph.simgen import GROUND_TRUTH_EDGES, VARIABLES


def edge_list(pairs, weight=0.5):
    return [Edge(s, t, weight, "population") for s, t in pairs]


def test_parent_sets():
    assert parent_sets([], VARIABLES) == {v: [] for v in VARIABLES}
    sets = parent_sets(edge_list(GROUND_TRUTH_EDGES), VARIABLES)
    assert len(sets["glucose"]) == 5
    assert len(sets["stress"]) == 2
    assert sets["inflammation"] == []
    single = parent_sets(edge_list([("steps", "stress")]), VARIABLES)
    assert single["stress"] == ["steps"]


def test_fit_patient_ar_hand_ols():
    # lagged parent values [1, 2, 0] against targets [0.5, 1.0, 0] -> 2.5/5
    series = np.array([[1.0, 0.0], [2.0, 0.5], [0.0, 1.0], [0.0, 0.0]])
    beta = fit_patient_ar(series, target=1, parents=[0])
    assert beta[0] == pytest.approx(0.5, abs=1e-12)


def test_fit_patient_ar_zero_target_and_orthogonal_parents():
    rng = np.random.default_rng(0)
    series = rng.normal(size=(30, 3))
    series[:, 2] = 0.0
    assert np.allclose(fit_patient_ar(series, 2, [0, 1]), 0.0, atol=1e-12)

    # orthogonal regressors: joint solution equals the univariate ones
    t = 21  # 20 lag pairs, a whole number of both sign periods
    series = np.zeros((t, 3))
    series[:, 0] = np.resize([1.0, -1.0], t)
    series[:, 1] = np.resize([1.0, 1.0, -1.0, -1.0], t)
    x = series[:-1, :2]
    assert abs(float(x[:, 0] @ x[:, 1])) < 1e-12
    rng = np.random.default_rng(1)
    series[:, 2] = rng.normal(size=t)
    joint = fit_patient_ar(series, 2, [0, 1])
    uni0 = fit_patient_ar(series, 2, [0])[0]
    uni1 = fit_patient_ar(series, 2, [1])[0]
    assert joint == pytest.approx([uni0, uni1], abs=1e-9)


def test_fit_patient_ar_too_short():
    series = np.zeros((3, 2))
    with pytest.raises(ValueError, match="lag pairs"):
        fit_patient_ar(series, 1, [0])


def test_granger_contribution_cases():
    rng = np.random.default_rng(2)
    t = 40
    series = np.zeros((t, 2))
    series[:, 0] = rng.normal(size=t)
    series[1:, 1] = series[:-1, 0]  # exact lagged copy
    contrib = granger_contribution(series, 1, [0], 0)
    assert contrib == pytest.approx(float((series[1:, 1] ** 2).mean()), abs=1e-9)

    series = rng.normal(size=(40, 3))
    for drop in (0, 1):
        assert granger_contribution(series, 2, [0, 1], drop) >= -1e-9
    with pytest.raises(ValueError):
        granger_contribution(series, 2, [0, 1], 2)


def test_adapt_hand_examples():
    config = AdaptConfig()
    w0 = edge_list([("steps", "stress")], weight=0.6)
    graph = adapt(w0, {("steps", "stress"): 0.8}, {}, config)
    assert graph.edges[0].weight == pytest.approx(0.65, abs=1e-12)

    w0 = edge_list([("steps", "stress")], weight=0.13)
    graph = adapt(w0, {("steps", "stress"): -0.8}, {}, config)
    assert graph.edges == []  # 0.1092 < 0.12 dropped


def test_adapt_zero_update_thresholds_only():
    config = AdaptConfig(eta=0.0, xi=0.0)
    w0 = edge_list([("steps", "stress")], 0.5) + edge_list([("sleep", "stress")], 0.10)
    graph = adapt(w0, {("steps", "stress"): 1.0, ("sleep", "stress"): 1.0}, {}, config)
    assert support(graph.edges) == {("steps", "stress")}
    assert graph.edges[0].weight == 0.5


def test_adapt_bound_and_support_properties():
    rng = np.random.default_rng(3)
    config = AdaptConfig()
    pairs = [("steps", "stress"), ("sleep", "glucose"), ("stress", "glucose")]
    for _ in range(50):
        w0 = [Edge(s, t, float(rng.uniform(0.05, 0.95)), "population")
              for s, t in pairs]
        betas = {(e.source, e.target): float(rng.normal(scale=2.0)) for e in w0}
        nu = {v: float(rng.uniform(0.2, 3.0)) for v in VARIABLES}
        graph = adapt(w0, betas, nu, config)
        base = {(e.source, e.target): e.weight for e in w0}
        assert support(graph.edges) <= set(pairs)
        for e in graph.edges:
            assert abs(e.weight - base[(e.source, e.target)]) <= config.max_update + 1e-12
            assert config.threshold <= e.weight <= 1.0


def test_personalize_deterministic_for_identical_series():
    rng = np.random.default_rng(4)
    series = rng.normal(size=(60, 6))
    w0 = edge_list(GROUND_TRUTH_EDGES, 0.5)
    nu = {v: 1.0 for v in VARIABLES}
    g1 = personalize(series, w0, nu, AdaptConfig(), VARIABLES, 0)
    g2 = personalize(series.copy(), w0, nu, AdaptConfig(), VARIABLES, 1)
    assert [(e.source, e.target, e.weight) for e in g1.edges] == \
        [(e.source, e.target, e.weight) for e in g2.edges]
    assert g1.betas == g2.betas


def test_personalize_short_series_names_patient():
    w0 = edge_list(GROUND_TRUTH_EDGES, 0.5)
    with pytest.raises(ValueError, match="patient 42"):
        personalize(np.zeros((5, 6)), w0, {}, AdaptConfig(), VARIABLES, 42)


def test_adapt_config_validation():
    with pytest.raises(ValueError):
        AdaptConfig(max_update=-0.1).validate()
    with pytest.raises(ValueError):
        AdaptConfig(threshold=1.5).validate()
