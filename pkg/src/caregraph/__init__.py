"""Personalized dynamic causal health-graph pipeline.

Simulates a longitudinal cohort with known temporal causal structure, learns a
prior-guided population graph, adapts it per patient, evolves it over rolling
windows, assigns latent risk states, answers counterfactual intervention
queries, and evaluates everything against the simulator's ground truth.
"""
from .simgen import SimConfig, sample_cohort, VARIABLES, GROUND_TRUTH_EDGES
from .popgraph import TrainConfig, PriorMask, train, export_edges
from .persgraph import AdaptConfig, personalize
from .dyngraph import DynConfig, evolve
from .latent import LatentConfig, build_latent_table
from .intervene import Action, InterveneConfig, rollout_effect, recommend
from .pipeline import RunConfig, run

__version__ = "0.1.0"

__all__ = [
    "SimConfig", "sample_cohort", "VARIABLES", "GROUND_TRUTH_EDGES",
    "TrainConfig", "PriorMask", "train", "export_edges",
    "AdaptConfig", "personalize",
    "DynConfig", "evolve",
    "LatentConfig", "build_latent_table",
    "Action", "InterveneConfig", "rollout_effect", "recommend",
    "RunConfig", "run",
    "__version__",
]
