"""Numpy neural networks for fault classification."""

from .estimator import FaultNetClassifier
from .layers import Conv1D, Dense, Elman, MeanPool
from .model import (
    PRETRAIN,
    SUPERVISED,
    ArchKind,
    NetModel,
    build_arch,
    forward,
    load_net,
    loss_and_gradients,
    mse_on,
    save_net,
)
from .training import EarlyStopping, TrainConfig, TrainTrace, evaluate, fit_arrays, train
from .windows import make_windows

__all__ = [
    "ArchKind",
    "Conv1D",
    "Dense",
    "EarlyStopping",
    "Elman",
    "FaultNetClassifier",
    "MeanPool",
    "NetModel",
    "PRETRAIN",
    "SUPERVISED",
    "TrainConfig",
    "TrainTrace",
    "build_arch",
    "evaluate",
    "fit_arrays",
    "forward",
    "load_net",
    "loss_and_gradients",
    "make_windows",
    "mse_on",
    "save_net",
    "train",
]
