"""Centralised and consensus-based distributed variational multi-object trackers."""

from .consensus import consensus_round, metropolis_weights, run_consensus
from .metrics import OspaParams, aggregate, ospa
from .models import GaussianBelief, MotionModel, SensorModel, build_cv_model, gaussian_likelihood, predict
from .scenario import ScenarioConfig, make_scenario
from .trackers import TrackerConfig, run_sequence, tracker_config_for

__version__ = "0.1.0"

__all__ = [
    "GaussianBelief",
    "MotionModel",
    "OspaParams",
    "ScenarioConfig",
    "SensorModel",
    "TrackerConfig",
    "aggregate",
    "build_cv_model",
    "consensus_round",
    "gaussian_likelihood",
    "make_scenario",
    "metropolis_weights",
    "ospa",
    "predict",
    "run_consensus",
    "run_sequence",
    "tracker_config_for",
]
