from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .model import ArchKind, build_arch, forward, mse_on
from .training import TrainConfig, fit_arrays

THRESHOLD = 0.5


class FaultNetClassifier(ClassifierMixin, BaseEstimator):
    """Scikit-learn wrapper around one of the five fault networks.

    ``X`` holds windows as produced by :func:`make_windows` (or plain
    ``(n, 9)`` rows for the window-1 kinds). Early stopping needs held-out
    data: pass ``X_val``/``y_val`` to :meth:`fit`, otherwise the last
    ``validation_fraction`` of the rows is held out.

    ``predict_proba`` gives the sigmoid output; ``predict`` thresholds it
    at 0.5.
    """

    def __init__(self, arch="ff", arch_options=None, learning_rate=0.01, momentum=0.9,
                 batch_size=64, max_epochs=500, patience=6, validation_fraction=0.15,
                 random_state=0):
        self.arch = arch
        self.arch_options = arch_options
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def _train_config(self) -> TrainConfig:
        return TrainConfig(max_epochs=self.max_epochs, patience=self.patience,
                           learning_rate=self.learning_rate, momentum=self.momentum,
                           batch_size=self.batch_size, seed=self.random_state)

    def fit(self, X, y, X_val=None, y_val=None):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float).ravel()
        if X_val is None:
            n_val = max(1, int(round(len(y) * self.validation_fraction)))
            X, X_val = X[:-n_val], X[-n_val:]
            y, y_val = y[:-n_val], y[-n_val:]
        kind = ArchKind(self.arch)
        width = 1 if kind.uses_labels else X.shape[-1]
        self.model_ = build_arch(kind, input_width=width, overrides=self.arch_options,
                                 seed=self.random_state)
        _, self.trace_ = fit_arrays(self.model_, X, y, X_val, y_val, self._train_config())
        self.classes_ = np.array([0, 1])
        self.n_epochs_ = self.trace_.total_epochs
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        p = forward(self.model_, X)
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= THRESHOLD).astype(np.int64)

    def mse(self, X, y) -> float:
        check_is_fitted(self, "model_")
        return mse_on(self.model_, X, y)
