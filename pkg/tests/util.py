"""Shared test helpers: finite-difference gradient checks and random graph cases."""
import numpy as np

from caregraph.popgraph import (PopulationModel, PriorMask, TrainConfig,
                                loss_and_grads)

FD_STEP = 1e-5


def random_instance(rng, d=6, n=3, t=8, max_lag=2):
    """A random training instance for gradient checking."""
    x = rng.normal(size=(n, t, d))
    theta = rng.normal(scale=1.5, size=(d, d))
    lag_coeffs = [rng.normal(scale=0.3, size=(d, d)) for _ in range(max_lag)]
    variables = tuple(f"v{i}" for i in range(d))
    model = PopulationModel(variables, theta, lag_coeffs)
    names = list(variables)
    pairs = [(u, v) for u in names for v in names if u != v]
    k = rng.integers(2, 6)
    chosen = [pairs[i] for i in rng.choice(len(pairs), size=2 * k, replace=False)]
    mask = PriorMask(frozenset(chosen[:k]), frozenset(chosen[k:]))
    config = TrainConfig(max_lag=max_lag)
    return x, model, mask, config


def max_rel_grad_error(x, model, mask, config):
    """Worst relative error of analytic vs central-difference gradients."""

    def loss_at():
        return loss_and_grads(x, model, mask, config)[0]

    _, _, g_theta, g_b = loss_and_grads(x, model, mask, config)
    worst = 0.0
    arrays = [(model.theta, g_theta)] + list(zip(model.lag_coeffs, g_b))
    d = model.theta.shape[0]
    for param, grad in arrays:
        for i in range(d):
            for j in range(d):
                orig = param[i, j]
                param[i, j] = orig + FD_STEP
                hi = loss_at()
                param[i, j] = orig - FD_STEP
                lo = loss_at()
                param[i, j] = orig
                fd = (hi - lo) / (2 * FD_STEP)
                denom = max(abs(fd), abs(grad[i, j]), 1e-6)
                worst = max(worst, abs(fd - grad[i, j]) / denom)
    return worst


def random_dag_matrix(rng, d=6):
    """Random weighted matrix whose support is acyclic."""
    order = rng.permutation(d)
    a = np.zeros((d, d))
    for i in range(d):
        for j in range(i + 1, d):
            if rng.random() < 0.5:
                a[order[i], order[j]] = rng.uniform(0.1, 1.0)
    return a


def random_cyclic_matrix(rng, d=6):
    """Random matrix containing a directed cycle with entries >= 0.1."""
    a = random_dag_matrix(rng, d)
    length = int(rng.integers(2, d + 1))
    nodes = rng.choice(d, size=length, replace=False)
    for i in range(length):
        a[nodes[i], nodes[(i + 1) % length]] = rng.uniform(0.1, 1.0)
    return a


def hash_tree(root, exclude_dirs=("manifests", "report")):
    """Map of relative path -> sha256 for every file under `root`."""
    import hashlib

    out = {}
    for path in sorted(root.rglob("*")):
        if path.is_dir():
            continue
        rel = path.relative_to(root)
        if rel.parts[0] in exclude_dirs:
            continue
        out[str(rel)] = hashlib.sha256(path.read_bytes()).hexdigest()
    return out
