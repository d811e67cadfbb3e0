"""Mini-batch SGD with momentum and validation early stopping."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..dataio import TEST, TRAIN, VAL, LabeledDataset
from ..exceptions import ConfigError, DivergenceDetected, EmptySplit
from .model import (
    PRETRAIN,
    SUPERVISED,
    ArchKind,
    NetModel,
    loss_and_gradients,
    mse_on,
    reconstruction_loss,
)
from .windows import make_windows


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 500
    patience: int = 6
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.max_epochs < 1 or self.patience < 1 or self.batch_size < 1:
            raise ConfigError(f"max_epochs, patience and batch_size must be >= 1: {self}")
        if not self.learning_rate >= 0 or not 0 <= self.momentum < 1:
            raise ConfigError(f"need learning_rate >= 0 and 0 <= momentum < 1: {self}")


@dataclass
class TrainTrace:
    """Per-epoch losses; epochs are numbered from 1."""

    epochs_run: int = 0
    train_loss_per_epoch: list[float] = field(default_factory=list)
    val_loss_per_epoch: list[float] = field(default_factory=list)
    wall_time_seconds: float = 0.0
    best_epoch: int = 0
    pretrain: "TrainTrace | None" = None

    @property
    def best_val_loss(self) -> float:
        return self.val_loss_per_epoch[self.best_epoch - 1]

    @property
    def total_epochs(self) -> int:
        return self.epochs_run + (self.pretrain.epochs_run if self.pretrain else 0)

    def to_dict(self) -> dict:
        d = {
            "epochs_run": self.epochs_run,
            "best_epoch": self.best_epoch,
            "wall_time_seconds": self.wall_time_seconds,
            "train_loss_per_epoch": list(self.train_loss_per_epoch),
            "val_loss_per_epoch": list(self.val_loss_per_epoch),
        }
        if self.pretrain is not None:
            d["pretrain"] = self.pretrain.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainTrace":
        return cls(d["epochs_run"], list(d["train_loss_per_epoch"]),
                   list(d["val_loss_per_epoch"]), d["wall_time_seconds"], d["best_epoch"],
                   cls.from_dict(d["pretrain"]) if d.get("pretrain") else None)


class EarlyStopping:
    """Stop once validation loss has not strictly improved for ``patience`` epochs."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_loss = math.inf
        self.best_epoch = 0
        self.epoch = 0

    def update(self, val_loss: float) -> bool:
        """Record the next epoch; True if it is a new best."""
        self.epoch += 1
        if val_loss < self.best_loss:
            self.best_loss = val_loss
            self.best_epoch = self.epoch
            return True
        return False

    @property
    def should_stop(self) -> bool:
        return self.epoch - self.best_epoch >= self.patience


def _run_phase(model: NetModel, phase, x_tr, y_tr, x_val, y_val, config: TrainConfig,
               rng) -> TrainTrace:
    params = model.parameters(phase)
    trainable = model.trainable(phase)
    velocity = [np.zeros_like(p) for p in params]
    stopper = EarlyStopping(config.patience)
    trace = TrainTrace()
    best_state = model.get_state()
    n = x_tr.shape[0]

    def val_loss():
        if phase == PRETRAIN:
            return reconstruction_loss(model, x_val)
        return mse_on(model, x_val, y_val)

    for _ in range(config.max_epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            b = order[start:start + config.batch_size]
            yb = None if y_tr is None else y_tr[b]
            loss, grads = loss_and_gradients(model, x_tr[b], yb, phase)
            if not math.isfinite(loss):
                trace.epochs_run = stopper.epoch
                raise DivergenceDetected(f"non-finite training loss in epoch {stopper.epoch + 1}",
                                         trace)
            total += loss * len(b)
            for p, g, v, on in zip(params, grads, velocity, trainable):
                if on:
                    v *= config.momentum
                    v -= config.learning_rate * g
                    p += v
        vl = val_loss()
        if not math.isfinite(vl):
            trace.epochs_run = stopper.epoch
            raise DivergenceDetected(f"non-finite validation loss in epoch {stopper.epoch + 1}",
                                     trace)
        trace.train_loss_per_epoch.append(total / n)
        trace.val_loss_per_epoch.append(vl)
        if stopper.update(vl):
            best_state = model.get_state()
        if stopper.should_stop:
            break

    model.set_state(best_state)
    trace.epochs_run = stopper.epoch
    trace.best_epoch = stopper.best_epoch
    return trace


def fit_arrays(model: NetModel, x_train, y_train, x_val, y_val,
               config: TrainConfig) -> tuple[NetModel, TrainTrace]:
    """Train in place on pre-built windows; the model ends at its best epoch.

    The sparse autoencoder first pre-trains encoder and decoder on
    reconstruction, then trains the read-out on the frozen encoder; the
    returned trace is the supervised phase with the pre-training trace
    attached.
    """
    if len(y_train) == 0:
        raise EmptySplit("training split produced no windows")
    if len(y_val) == 0:
        raise EmptySplit("validation split produced no windows")
    x_train = np.asarray(x_train, dtype=float)
    x_val = np.asarray(x_val, dtype=float)
    y_train = np.asarray(y_train, dtype=float)
    y_val = np.asarray(y_val, dtype=float)
    rng = np.random.default_rng(config.seed)

    start = time.perf_counter()
    pre = None
    if model.kind is ArchKind.SPARSE_AUTOENCODER:
        pre = _run_phase(model, PRETRAIN, x_train, None, x_val, None, config, rng)
    trace = _run_phase(model, SUPERVISED, x_train, y_train, x_val, y_val, config, rng)
    trace.wall_time_seconds = time.perf_counter() - start
    trace.pretrain = pre
    return model, trace


def train(model: NetModel, dataset: LabeledDataset,
          config: TrainConfig) -> tuple[NetModel, TrainTrace]:
    """Window the dataset for ``model`` and train with early stopping on Val."""
    windows = make_windows(dataset, model.window, model.kind)
    for tag in (TRAIN, VAL):
        if len(windows[tag][1]) == 0:
            raise EmptySplit(f"{tag} split yields no windows of length {model.window}")
    (xt, yt), (xv, yv) = windows[TRAIN], windows[VAL]
    return fit_arrays(model, xt, yt, xv, yv, config)


def evaluate(model: NetModel, dataset: LabeledDataset, split: str = TEST) -> float:
    x, y = make_windows(dataset, model.window, model.kind, split=split)
    return mse_on(model, x, y)
