"""Hybrid predictor, composite loss, deterministic training and baselines."""

from .baselines import BASELINE_KINDS, BaselineModel, build_baseline
from .head import FlowHead, Prediction
from .loss import DEFAULT_WEIGHTS, loss, loss_cotangent, per_sample_loss
from .networks import HybridModel, MLPModel
from .params import QUANTUM, DenseLayer, FlatParams, ParamLayout
from .train import (
    Adam,
    GradientDescent,
    TrainLog,
    as_arrays,
    dataset_loss,
    forward,
    grad,
    make_optimizer,
    train_deterministic,
)

__all__ = [
    "BASELINE_KINDS",
    "BaselineModel",
    "build_baseline",
    "FlowHead",
    "Prediction",
    "DEFAULT_WEIGHTS",
    "loss",
    "loss_cotangent",
    "per_sample_loss",
    "HybridModel",
    "MLPModel",
    "QUANTUM",
    "DenseLayer",
    "FlatParams",
    "ParamLayout",
    "Adam",
    "GradientDescent",
    "TrainLog",
    "as_arrays",
    "dataset_loss",
    "forward",
    "grad",
    "make_optimizer",
    "train_deterministic",
]
