"""Shared fixtures: a small fast pipeline run and the full-scale benchmark runs."""
import pytest

from caregraph import pipeline
from caregraph.simgen import SimConfig, sample_cohort

ACCEPTANCE_SEEDS = (7, 8, 9)


@pytest.fixture(scope="session")
def small_config():
    """A 10-patient benchmark that keeps integration tests fast."""
    return pipeline.RunConfig(seed=11, sim=SimConfig(n_patients=10, n_steps=60)).seeded()


@pytest.fixture(scope="session")
def small_result(small_config):
    return pipeline.run(small_config)


@pytest.fixture(scope="session")
def acceptance_results():
    """Full-scale runs: every variant on a shared cohort, for each benchmark seed."""
    out = {}
    for seed in ACCEPTANCE_SEEDS:
        config = pipeline.RunConfig(seed=seed).seeded()
        bundle = sample_cohort(config.sim)
        out[seed] = {
            variant: pipeline.run(config, bundle=bundle, variant=variant)
            for variant in pipeline.VARIANTS
        }
    return out
