"""Learned steering for a two-lane cone slalom.

A kinematic car model, a feature pipeline, a small numpy CNN that maps
features to a desired steering-wheel angle, a PD torque loop and a synthetic
expert that generates the training corpus.
"""
from .config import ExperimentConfig, load_config
from .controller import PdGains, Pilot, pd_torque, run_closed_loop
from .data import Dataset, RunTrace
from .expert import ExpertConfig, SpeedProfile, generate_corpus
from .features import FeatureMatrixEncoder, Normalizer, extract_frame
from .nn import CnnModel, SteeringCNNRegressor, TrainConfig
from .sim import Course, VehicleParams, VehicleState, build_course, step

__all__ = [
    "CnnModel", "Course", "Dataset", "ExperimentConfig", "ExpertConfig", "FeatureMatrixEncoder",
    "Normalizer", "PdGains", "Pilot", "RunTrace", "SpeedProfile", "SteeringCNNRegressor",
    "TrainConfig", "VehicleParams", "VehicleState", "build_course", "extract_frame",
    "generate_corpus", "load_config", "pd_torque", "run_closed_loop", "step",
]
