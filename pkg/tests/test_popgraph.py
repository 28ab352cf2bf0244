"""Population graph: adjacency, acyclicity penalty, gradients, training."""
import numpy as np
import pytest
import scipy.linalg

from caregraph.popgraph import (PopulationModel, PriorMask, TrainConfig,
                                adjacency, dag_penalty, expm, export_edges,
                                init_model, loss_and_grads, predict,
                                prior_loss, train)
from util import (max_rel_grad_error, random_cyclic_matrix, random_dag_matrix,
                  random_instance)


def test_adjacency_values():
    a = adjacency(np.zeros((4, 4)))
    assert np.all(np.diag(a) == 0.0)
    off = a[~np.eye(4, dtype=bool)]
    assert np.allclose(off, 0.5)

    theta = np.zeros((3, 3))
    theta[0, 1] = -2.5
    theta[1, 0] = 50.0
    a = adjacency(theta)
    assert a[0, 1] == pytest.approx(0.07586, abs=1e-5)
    assert a[1, 0] == pytest.approx(1.0, abs=1e-9)

    with pytest.raises(ValueError):
        adjacency(np.zeros((2, 3)))


def test_adjacency_range_property():
    rng = np.random.default_rng(0)
    for _ in range(20):
        a = adjacency(rng.normal(scale=3.0, size=(6, 6)))
        assert np.all(np.diag(a) == 0.0)
        off = a[~np.eye(6, dtype=bool)]
        assert np.all((off > 0.0) & (off < 1.0))


def test_expm_matches_scipy():
    rng = np.random.default_rng(1)
    for _ in range(20):
        m = rng.normal(scale=1.0, size=(6, 6))
        assert np.allclose(expm(m), scipy.linalg.expm(m), atol=1e-12)


def test_dag_penalty_base_cases():
    assert dag_penalty(np.zeros((5, 5))) == pytest.approx(0.0, abs=1e-12)
    single = np.zeros((4, 4))
    single[0, 1] = 1.0
    assert dag_penalty(single) == pytest.approx(0.0, abs=1e-9)


def test_dag_penalty_two_cycle_closed_form():
    rng = np.random.default_rng(2)
    a = np.zeros((2, 2))
    a[0, 1], a[1, 0] = 1.0, 1.0
    assert dag_penalty(a) == pytest.approx(2.0 * np.cosh(1.0) - 2.0, abs=1e-9)
    for _ in range(10):
        u, v = rng.uniform(0.1, 1.0, 2)
        a[0, 1], a[1, 0] = u, v
        # A o A has entries u^2, v^2, whose eigenvalues are +-uv
        assert dag_penalty(a) == pytest.approx(2.0 * np.cosh(u * v) - 2.0, abs=1e-9)


def test_dag_penalty_random_support_suites():
    rng = np.random.default_rng(3)
    for _ in range(100):
        assert abs(dag_penalty(random_dag_matrix(rng))) <= 1e-9
    for _ in range(100):
        assert dag_penalty(random_cyclic_matrix(rng)) > 1e-9


def test_predict_single_edge_and_errors():
    variables = ("a", "b")
    theta = np.full((2, 2), 60.0)  # adjacency ~ 1 off-diagonal
    coeffs = [np.zeros((2, 2))]
    coeffs[0][0, 1] = 0.7
    model = PopulationModel(variables, theta, coeffs)
    x = np.zeros((1, 3, 2))
    x[0, 0, 0] = 1.0
    out = predict(x, model)
    assert out[0, 0] == pytest.approx([0.0, 0.7], abs=1e-9)
    assert out[0, 1] == pytest.approx([0.0, 0.0], abs=1e-12)

    model_zero = PopulationModel(variables, theta, [np.zeros((2, 2))])
    assert np.all(predict(x, model_zero) == 0.0)
    with pytest.raises(ValueError):
        predict(np.zeros((1, 1, 2)), model)


def test_prior_loss_cases():
    a = np.array([[0.0, 0.25], [0.0, 0.0]])
    enc = np.zeros((2, 2), dtype=bool)
    forb = np.zeros((2, 2), dtype=bool)
    assert prior_loss(a, enc, forb) == 0.0
    enc[0, 1] = True
    assert prior_loss(a, enc, forb) == pytest.approx(0.75)
    forb[1, 0] = True
    a[1, 0] = 0.4
    assert prior_loss(a, enc, forb) == pytest.approx(0.75 + 0.4)


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(7)
    for _ in range(8):
        x, model, mask, config = random_instance(rng)
        assert max_rel_grad_error(x, model, mask, config) <= 1e-5


def test_zero_input_zero_reconstruction():
    rng = np.random.default_rng(5)
    x, model, mask, config = random_instance(rng)
    x = np.zeros_like(x)
    total, comps, g_theta, g_b = loss_and_grads(x, model, mask, config)
    assert comps["rec"] == 0.0
    assert all(np.allclose(g, 0.0) for g in g_b)


def test_init_and_zero_epoch_training():
    variables = ("a", "b", "c")
    mask = PriorMask(frozenset({("a", "b")}), frozenset({("c", "a")}))
    config = TrainConfig(epochs=0)
    model, history = train(np.zeros((2, 5, 3)), mask, config, variables)
    assert history == []
    expected = np.full((3, 3), config.init_logit)
    expected[0, 1] += config.prior_boost
    assert np.array_equal(model.theta, expected)
    assert all(np.all(b == 0.0) for b in model.lag_coeffs)


def test_training_deterministic_and_descending(small_result):
    x = small_result.state.tensor_std[:4]
    mask = PriorMask(frozenset(), frozenset())
    config = TrainConfig(epochs=50)
    variables = tuple(f"v{i}" for i in range(x.shape[2]))
    m1, h1 = train(x, mask, config, variables)
    m2, h2 = train(x, mask, config, variables)
    assert np.array_equal(m1.theta, m2.theta)
    assert all(np.array_equal(a, b) for a, b in zip(m1.lag_coeffs, m2.lag_coeffs))
    assert h1 == h2
    assert h1[-1]["total"] < h1[0]["total"]


def test_gradient_clip_norm_bound():
    rng = np.random.default_rng(9)
    x, model, mask, _ = random_instance(rng)
    config = TrainConfig(grad_clip_norm=0.01, max_lag=model.max_lag)
    _, _, g_theta, g_b = loss_and_grads(x, model, mask, config)
    grads = [g_theta] + g_b
    gnorm = float(np.sqrt(sum((g ** 2).sum() for g in grads)))
    if gnorm > config.grad_clip_norm:
        grads = [g * config.grad_clip_norm / gnorm for g in grads]
    clipped = float(np.sqrt(sum((g ** 2).sum() for g in grads)))
    assert clipped <= config.grad_clip_norm + 1e-9


def test_two_variable_var_recovery():
    rng = np.random.default_rng(11)
    n, t = 20, 40
    x = np.zeros((n, t, 2))
    x[:, :, 0] = rng.normal(size=(n, t))
    for step in range(1, t):
        x[:, step, 1] = 0.8 * x[:, step - 1, 0] + 0.3 * rng.normal(size=n)
    mask = PriorMask(frozenset(), frozenset())
    config = TrainConfig(max_lag=1)
    model, _ = train(x, mask, config, ("u", "v"))
    a = model.adjacency()
    off = [(i, j) for i in range(2) for j in range(2) if i != j]
    best = max(off, key=lambda ij: a[ij])
    assert best == (0, 1)


def test_export_edges_threshold_topk_and_ties():
    variables = tuple(f"v{i}" for i in range(6))
    theta = np.full((6, 6), -10.0)
    rng = np.random.default_rng(13)
    pairs = [(i, j) for i in range(6) for j in range(6) if i != j]
    for idx in rng.choice(len(pairs), size=20, replace=False):
        i, j = pairs[idx]
        theta[i, j] = rng.uniform(0.0, 3.0)
    model = PopulationModel(variables, theta, [np.zeros((6, 6))])
    config = TrainConfig()
    edges = export_edges(model, config)
    assert len(edges) == 15
    weights = [e.weight for e in edges]
    assert weights == sorted(weights, reverse=True)
    a = model.adjacency()
    all_weights = sorted((a[i, j] for i, j in pairs), reverse=True)
    assert weights == pytest.approx(all_weights[:15])

    low = PopulationModel(variables, np.full((6, 6), -10.0), [np.zeros((6, 6))])
    assert export_edges(low, config) == []

    tie = PopulationModel(("b", "a", "c"), np.zeros((3, 3)), [np.zeros((3, 3))])
    names = [(e.source, e.target) for e in export_edges(tie, config)]
    assert names == sorted(names)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lambda_dag=-1.0).validate()
    with pytest.raises(ValueError):
        TrainConfig(max_lag=0).validate()
