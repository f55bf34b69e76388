"""Small NumPy 2D-CNN regression engine."""
from .estimator import SteeringCNNRegressor, evaluate, train
from .layers import conv2d_backward, conv2d_forward, elu
from .model import FORMAT_VERSION, CnnModel, ModelFormatError
from .optim import Adam, ReduceLROnPlateau
from .training import FitReport, TrainConfig, TrainingError, regression_metrics

__all__ = [
    "Adam", "CnnModel", "FORMAT_VERSION", "FitReport", "ModelFormatError", "ReduceLROnPlateau",
    "SteeringCNNRegressor", "TrainConfig", "TrainingError", "conv2d_backward", "conv2d_forward",
    "elu", "evaluate", "regression_metrics", "train",
]
