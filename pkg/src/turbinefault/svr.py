"""Gaussian-kernel epsilon-SVR with a pairwise (SMO-style) dual solver.

The dual is solved in the single-variable form ``beta = alpha - alpha*``::

    minimise   1/2 beta' K beta - y' beta + eps * |beta|_1
    subject to sum(beta) = 0,  -C <= beta_i <= C

Each step moves one pair ``(i, j)`` along ``beta_i += t, beta_j -= t`` and
minimises the piecewise quadratic in ``t`` exactly.
"""

from __future__ import annotations

import json
import math
import warnings
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed
from scipy.spatial.distance import cdist
from sklearn.base import BaseEstimator, RegressorMixin, clone
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .dataio import N_FEATURES, NormalizationStats
from .exceptions import (
    ArtifactIOError,
    ConfigError,
    ConvergenceWarning,
    InsufficientData,
    TooFewSamples,
)

MEDIUM_KERNEL_SCALE = math.sqrt(N_FEATURES)
GRAM_CACHE_LIMIT = 8192
SV_THRESHOLD = 1e-12
MODEL_FORMAT = "turbinefault.svr"
MODEL_VERSION = 1


def gaussian_kernel(x, y, scale: float) -> float:
    """``exp(-||x - y||^2 / scale^2)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"kernel arguments differ in shape: {x.shape} vs {y.shape}")
    d = x - y
    return math.exp(-float(np.dot(d, d)) / scale ** 2)


def gaussian_gram(A, B, scale: float) -> np.ndarray:
    """Kernel matrix between rows of ``A`` and rows of ``B``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    return np.exp(-cdist(A, B, "sqeuclidean") / scale ** 2)


class _KernelRows:
    """Kernel rows on demand: a dense Gram up to ``limit`` samples, else an LRU."""

    def __init__(self, X, scale, limit=GRAM_CACHE_LIMIT, lru_rows=512):
        self.X = X
        self.scale = scale
        self.gram = gaussian_gram(X, X, scale) if X.shape[0] <= limit else None
        self._lru = OrderedDict()
        self._lru_rows = lru_rows

    def __getitem__(self, i):
        if self.gram is not None:
            return self.gram[i]
        row = self._lru.get(i)
        if row is None:
            row = gaussian_gram(self.X[i], self.X, self.scale)[0]
            self._lru[i] = row
            if len(self._lru) > self._lru_rows:
                self._lru.popitem(last=False)
        else:
            self._lru.move_to_end(i)
        return row


def _pair_step(bi, bj, gi, gj, kij, C, eps):
    """Optimal ``t`` for ``beta_i += t, beta_j -= t`` (assumes a descent direction)."""
    eta = max(2.0 - 2.0 * kij, 0.0)  # K_ii = K_jj = 1 for the Gaussian kernel
    hi = min(C - bi, bj + C)
    if hi <= 0.0:
        return 0.0
    cuts = sorted({0.0, hi} | {c for c in (-bi, bj) if 0.0 < c < hi})
    dg = gi - gj

    def phi(t):
        return 0.5 * eta * t * t + dg * t + eps * (abs(bi + t) + abs(bj - t))

    best_t, best_val = 0.0, phi(0.0)
    for a, b in zip(cuts[:-1], cuts[1:]):
        mid = 0.5 * (a + b)
        slope = dg + eps * (math.copysign(1.0, bi + mid) - math.copysign(1.0, bj - mid))
        if eta > 0.0:
            t = min(max(-slope / eta, a), b)
        else:
            t = b if slope < 0.0 else a
        val = phi(t)
        if val < best_val:
            best_t, best_val = t, val
    return best_t


@dataclass
class _DualSolution:
    beta: np.ndarray
    bias: float
    grad: np.ndarray
    n_iter: int
    converged: bool
    objective: float


def _solve_dual(rows, y, C, eps, tol, max_iter):
    n = y.shape[0]
    beta = np.zeros(n)
    g = -y.copy()  # gradient of the smooth part: K beta - y
    # direction-dependent offsets of the l1 term; inf marks a bound that blocks the move
    s_up = np.full(n, eps)
    s_dn = np.full(n, eps)

    def refresh(k):
        b = beta[k]
        s_up[k] = math.inf if b >= C else (eps if b >= 0 else -eps)
        s_dn[k] = math.inf if b <= -C else (eps if b <= 0 else -eps)

    snap = 1e-12 * C
    converged = False
    it = 0
    while it < max_iter:
        c_up = g + s_up
        c_dn = s_dn - g
        i = int(np.argmin(c_up))
        if c_up[i] + c_dn.min() >= -tol:
            converged = True
            break
        ki = rows[i]
        gain_num = c_up[i] + c_dn
        eta = np.maximum(2.0 - 2.0 * ki, 1e-12)
        score = np.where(gain_num < 0, -(gain_num * gain_num) / eta, np.inf)
        j = int(np.argmin(score))
        t = _pair_step(beta[i], beta[j], g[i], g[j], ki[j], C, eps)
        it += 1
        if t == 0.0:
            # degenerate pair; fall back to the steepest partner
            j = int(np.argmin(c_dn))
            t = _pair_step(beta[i], beta[j], g[i], g[j], ki[j], C, eps)
            if t == 0.0:
                break
        kj = rows[j]
        bi, bj = beta[i] + t, beta[j] - t
        beta[i] = C if bi > C - snap else (-C if bi < -C + snap else bi)
        beta[j] = C if bj > C - snap else (-C if bj < -C + snap else bj)
        refresh(i)
        refresh(j)
        g += t * (ki - kj)

    bias = _bias(beta, g, C, eps)
    objective = float(0.5 * beta @ (g - y) + eps * np.abs(beta).sum())
    return _DualSolution(beta, bias, g, it, converged, objective)


def _bias(beta, g, C, eps):
    F = -g
    free_pos = (beta > 0) & (beta < C)
    free_neg = (beta < 0) & (beta > -C)
    if free_pos.any() or free_neg.any():
        vals = np.concatenate([F[free_pos] - eps, F[free_neg] + eps])
        return float(vals.mean())
    lower = np.where(beta < C, F - np.where(beta >= 0, eps, -eps), -np.inf).max()
    upper = np.where(beta > -C, F + np.where(beta <= 0, eps, -eps), np.inf).min()
    return float(0.5 * (lower + upper))


class GaussianSVR(RegressorMixin, BaseEstimator):
    """Epsilon-insensitive support vector regression with a Gaussian kernel.

    Parameters
    ----------
    C : float, default=1.0
        Box constraint on each dual coefficient.
    epsilon : float or None, default=None
        Half-width of the insensitive tube. ``None`` means one tenth of the
        training-target standard deviation.
    kernel_scale : float, default=3.0
        Length scale ``s`` in ``exp(-||x - y||^2 / s^2)``; ``sqrt(9)`` is the
        "medium" preset for nine features.
    tol : float, default=1e-3
        Stop once the largest pairwise KKT violation is below ``tol``.
    max_passes : int, default=10000
        Iteration budget in units of ``n_samples`` pair updates.
    random_state : int, RandomState or None, default=0
        Seeds the index order used to break ties in working-pair selection.

    Attributes
    ----------
    support_ : ndarray of shape (n_SV,)
        Training indices of the support vectors.
    support_vectors_ : ndarray of shape (n_SV, n_features)
    dual_coef_ : ndarray of shape (n_SV,)
        ``alpha - alpha*`` for each support vector.
    intercept_ : float
    epsilon_ : float
        Tube width actually used.
    n_iter_ : int
    converged_ : bool
    dual_objective_ : float
        Value of the minimised dual objective at the returned solution.
    """

    def __init__(self, C=1.0, epsilon=None, kernel_scale=MEDIUM_KERNEL_SCALE, tol=1e-3,
                 max_passes=10_000, random_state=0):
        self.C = C
        self.epsilon = epsilon
        self.kernel_scale = kernel_scale
        self.tol = tol
        self.max_passes = max_passes
        self.random_state = random_state

    def _check_params(self):
        if not self.C > 0:
            raise ConfigError(f"C must be > 0, got {self.C}")
        if self.epsilon is not None and not self.epsilon >= 0:
            raise ConfigError(f"epsilon must be >= 0, got {self.epsilon}")
        if not self.kernel_scale > 0:
            raise ConfigError(f"kernel_scale must be > 0, got {self.kernel_scale}")
        if not self.tol > 0:
            raise ConfigError(f"tol must be > 0, got {self.tol}")
        if int(self.max_passes) < 1:
            raise ConfigError(f"max_passes must be >= 1, got {self.max_passes}")

    def fit(self, X, y):
        self._check_params()
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        n = X.shape[0]
        if n < 2:
            raise InsufficientData(f"SVR needs >= 2 training rows, got {n}")
        C = float(self.C)
        eps = 0.1 * float(np.std(y)) if self.epsilon is None else float(self.epsilon)

        order = check_random_state(self.random_state).permutation(n)
        rows = _KernelRows(X[order], float(self.kernel_scale))
        sol = _solve_dual(rows, y[order], C, eps, float(self.tol), int(self.max_passes) * n)

        beta = np.empty(n)
        beta[order] = sol.beta
        keep = np.flatnonzero(np.abs(beta) > SV_THRESHOLD)
        self.support_ = keep
        self.support_vectors_ = X[keep]
        self.dual_coef_ = beta[keep]
        self.intercept_ = sol.bias
        self.epsilon_ = eps
        self.n_iter_ = sol.n_iter
        self.converged_ = sol.converged
        self.dual_objective_ = sol.objective
        self.n_features_in_ = X.shape[1]
        if not sol.converged:
            warnings.warn(
                f"SMO stopped after {sol.n_iter} pair updates without reaching tol={self.tol}",
                ConvergenceWarning, stacklevel=2,
            )
        return self

    def predict(self, X, chunk_size=4096):
        check_is_fitted(self, "dual_coef_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        out = np.full(X.shape[0], self.intercept_)
        if self.dual_coef_.size == 0:
            return out
        for start in range(0, X.shape[0], chunk_size):
            K = gaussian_gram(X[start:start + chunk_size], self.support_vectors_,
                              float(self.kernel_scale))
            out[start:start + chunk_size] += K @ self.dual_coef_
        return out


@dataclass(frozen=True)
class CvReport:
    fold_mses: tuple[float, ...]
    mean_mse: float
    std_mse: float


def kfold_indices(n: int, k: int, seed: int) -> list[np.ndarray]:
    """Seeded permutation cut into ``k`` folds whose sizes differ by at most one."""
    if k < 2:
        raise ConfigError(f"k must be >= 2, got {k}")
    if n < k:
        raise TooFewSamples(f"{n} samples cannot fill {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


def _fold_mse(estimator, X, y, test_idx):
    train = np.ones(len(y), dtype=bool)
    train[test_idx] = False
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        model = clone(estimator).fit(X[train], y[train])
    resid = model.predict(X[test_idx]) - y[test_idx]
    return float(np.mean(resid ** 2))


def kfold_cv(X, y, k: int = 5, estimator=None, seed: int = 42, n_jobs=None) -> CvReport:
    """K-fold cross-validated MSE (normalised units) of an SVR configuration.

    Folds can train in parallel via ``n_jobs``; results do not depend on it.
    """
    X, y = check_X_y(X, y, dtype=float, y_numeric=True)
    estimator = GaussianSVR() if estimator is None else estimator
    folds = kfold_indices(len(y), k, seed)
    mses = Parallel(n_jobs=n_jobs)(delayed(_fold_mse)(estimator, X, y, f) for f in folds)
    arr = np.array(mses)
    return CvReport(tuple(mses), float(arr.mean()), float(arr.std()))


def save_svr(model: GaussianSVR, path, stats: NormalizationStats | None = None) -> None:
    """Write a fitted SVR as versioned JSON (floats round-trip exactly)."""
    check_is_fitted(model, "dual_coef_")
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "hyper": model.get_params(),
        "epsilon_used": model.epsilon_,
        "n_iter": model.n_iter_,
        "converged": bool(model.converged_),
        "dual_objective": model.dual_objective_,
        "stats": stats.to_dict() if stats is not None else None,
        "n_features": int(model.n_features_in_),
        "intercept": model.intercept_,
        "dual_coef": model.dual_coef_.tolist(),
        "support_vectors": model.support_vectors_.tolist(),
    }
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1)
            fh.write("\n")
    except OSError as exc:
        raise ArtifactIOError(f"cannot write model {path}: {exc}") from exc


def load_svr(path) -> tuple[GaussianSVR, NormalizationStats | None]:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ArtifactIOError(f"cannot read model {path}: {exc}") from exc
    if doc.get("format") != MODEL_FORMAT or doc.get("version") != MODEL_VERSION:
        raise ArtifactIOError(f"{path}: not a version-{MODEL_VERSION} SVR model file")
    model = GaussianSVR(**doc["hyper"])
    model.intercept_ = float(doc["intercept"])
    model.dual_coef_ = np.array(doc["dual_coef"], dtype=float)
    nf = int(doc["n_features"])
    model.support_vectors_ = np.array(doc["support_vectors"], dtype=float).reshape(-1, nf)
    model.support_ = np.arange(model.dual_coef_.size)
    model.epsilon_ = float(doc["epsilon_used"])
    model.n_iter_ = int(doc["n_iter"])
    model.converged_ = bool(doc["converged"])
    model.dual_objective_ = float(doc["dual_objective"])
    model.n_features_in_ = nf
    stats = NormalizationStats.from_dict(doc["stats"]) if doc["stats"] else None
    return model, stats
