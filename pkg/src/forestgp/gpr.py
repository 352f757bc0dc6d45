"""Multi-output Gaussian process regression with a separable kernel.

The prior covariance of the stacked training targets is
``Gamma_y (x) K + e * D (x) I`` where ``K`` is the Matern Gram matrix of the
training inputs, ``Gamma_y`` the sample covariance of the targets, ``D`` its
diagonal and ``e`` the error scale.  Writing ``Gamma_y = W S W^T`` with
``W = D^{1/2} U`` (``U S U^T`` the eigendecomposition of the
correlation-like matrix ``D^{-1/2} Gamma_y D^{-1/2}``) and ``K = V L V^T``
gives

    K + E = (W (x) V) (S (x) L + e I) (W (x) V)^T

so the inverse is applied with two small eigendecompositions and the middle
factor is diagonal.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .dataio import StandardizationStats, standardize
from .errors import InputError, PredictionError, TrainingError
from .kernel import KernelParams, gram

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GprConfig:
    kernel: KernelParams = KernelParams()
    error_scale: float = 0.1
    center: bool = True
    jitter_start: float = 1e-10
    jitter_max: float = 1e-6
    # fixed output covariance instead of the sample covariance of Y_t
    prior_covariance: np.ndarray | None = None
    # fixed attribute means; overrides ``center`` when given
    prior_mean: np.ndarray | None = None

    def __post_init__(self):
        if not self.error_scale > 0:
            raise InputError(f"error_scale must be positive, got {self.error_scale}")


@dataclass
class TrainingSet:
    X: np.ndarray
    Y: np.ndarray
    attribute_names: list | None = None
    predictor_names: list | None = None

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.Y = np.asarray(self.Y, dtype=float)
        if self.Y.ndim == 1:
            self.Y = self.Y[:, None]
        n_t = self.X.shape[0]
        if self.Y.shape[0] != n_t:
            raise InputError(f"X has {n_t} rows but Y has {self.Y.shape[0]}")
        if n_t < 2:
            raise InputError("at least two training plots are required")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.Y))):
            raise InputError("training data contain non-finite values")
        if np.any(self.Y < 0):
            raise InputError("training attributes must be non-negative")
        if self.attribute_names is None:
            self.attribute_names = [f"y{a}" for a in range(self.Y.shape[1])]
        if self.predictor_names is None:
            self.predictor_names = [f"x{j + 1:03d}" for j in range(self.X.shape[1])]

    @classmethod
    def from_dataset(cls, ds):
        if ds.Y is None:
            raise InputError("dataset has no attribute columns")
        return cls(ds.X, ds.Y, list(ds.attribute_names), list(ds.predictor_names))

    @property
    def n_t(self):
        return self.X.shape[0]


@dataclass(frozen=True)
class KroneckerSystem:
    """Diagonalized ``Gamma (x) K + e D (x) I``; see the module docstring."""

    W: np.ndarray
    W_inv: np.ndarray
    s: np.ndarray
    V: np.ndarray
    lam: np.ndarray
    error_scale: float

    @property
    def denom(self):
        # entry (i, a) is the eigenvalue lam[i] * s[a] + e
        return np.outer(self.lam, self.s) + self.error_scale

    def solve(self, v):
        """Apply ``(K + E)^{-1}`` to an attribute-major vector (or n_t x n_y matrix)."""
        n_t, n_y = self.V.shape[0], self.W.shape[0]
        R = np.asarray(v, dtype=float).reshape((n_t, n_y), order="F")
        Z = self.V.T @ R @ self.W_inv.T
        Z /= self.denom
        out = self.V @ Z @ self.W_inv
        return out.reshape(-1, order="F") if np.ndim(v) == 1 else out

    def matvec(self, v):
        """Apply ``K + E`` (reconstructed from the factors)."""
        n_t, n_y = self.V.shape[0], self.W.shape[0]
        R = np.asarray(v, dtype=float).reshape((n_t, n_y), order="F")
        Z = self.V.T @ R @ self.W
        Z *= self.denom
        out = self.V @ Z @ self.W.T
        return out.reshape(-1, order="F") if np.ndim(v) == 1 else out


@dataclass(frozen=True)
class PredictiveDistribution:
    mean: np.ndarray
    covariance: np.ndarray

    @property
    def sd(self):
        return np.sqrt(np.maximum(np.diag(self.covariance), 0.0))


@dataclass(frozen=True)
class TrainedGprModel:
    stats: StandardizationStats
    kept: np.ndarray
    X_t: np.ndarray
    attribute_means: np.ndarray
    gamma_y: np.ndarray
    D: np.ndarray
    error_scale: float
    kernel: KernelParams
    center: bool
    system: KroneckerSystem
    centered_targets: np.ndarray
    weights: np.ndarray
    attribute_names: list
    predictor_names: list
    metadata: dict = field(default_factory=dict)

    @property
    def n_t(self):
        return self.X_t.shape[0]

    @property
    def n_y(self):
        return self.gamma_y.shape[0]

    @property
    def n_x(self):
        return self.stats.mean.shape[0]

    def prepare_inputs(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_x:
            raise InputError(f"expected {self.n_x} predictors, got {X.shape[1]}")
        if not np.all(np.isfinite(X)):
            raise InputError("predictors contain non-finite values")
        Z, _ = standardize(X, self.stats)
        return Z[:, self.kept]


def regularize_covariance(C, start=1e-10, stop=1e-6):
    """Add ``lam * mean(diag) * I`` with escalating ``lam`` until Cholesky succeeds.

    Returns ``(C_reg, jitter)`` where ``jitter`` is the absolute amount added
    (0.0 when ``C`` factorizes as is).  Raises :class:`TrainingError` when
    ``stop`` is exceeded.
    """
    C = 0.5 * (C + C.T)
    try:
        np.linalg.cholesky(C)
        return C, 0.0
    except np.linalg.LinAlgError:
        pass
    scale = float(np.mean(np.diag(C)))
    if not scale > 0:
        scale = 1.0
    lam = start
    eye = np.eye(C.shape[0])
    while lam <= stop * (1 + 1e-9):
        Cj = C + lam * scale * eye
        try:
            np.linalg.cholesky(Cj)
            return Cj, lam * scale
        except np.linalg.LinAlgError:
            lam *= 10.0
    raise TrainingError(f"covariance not positive definite after jitter {stop:g}")


def factorize(gamma_y, K, D, error_scale) -> KroneckerSystem:
    d_sqrt = np.sqrt(D)
    C = gamma_y / np.outer(d_sqrt, d_sqrt)
    try:
        s, U = np.linalg.eigh(0.5 * (C + C.T))
        lam, V = scipy.linalg.eigh(K, driver="evd")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise TrainingError(f"eigendecomposition failed: {exc}") from exc
    W = d_sqrt[:, None] * U
    W_inv = U.T / d_sqrt[None, :]
    # C order throughout so a reloaded model multiplies with identical rounding
    c = np.ascontiguousarray
    system = KroneckerSystem(W=c(W), W_inv=c(W_inv), s=s, V=c(V), lam=lam,
                             error_scale=float(error_scale))
    if not np.all(system.denom > 0):
        raise TrainingError("K + E is not positive definite")
    return system


def train(ts: TrainingSet, config: GprConfig = GprConfig()) -> TrainedGprModel:
    """Precompute everything prediction needs for the given training set."""
    if not isinstance(ts, TrainingSet):
        ts = TrainingSet(*ts)
    Z, stats = standardize(ts.X)
    kept = ~stats.constant
    dropped = [ts.predictor_names[j] for j in np.flatnonzero(stats.constant)]
    if dropped:
        log.warning("dropping %d zero-variance predictors: %s", len(dropped), dropped)
    if not kept.any():
        raise InputError("all predictors have zero variance")
    X_t = Z[:, kept]

    Y = ts.Y
    n_t, n_y = Y.shape
    if config.prior_mean is not None:
        means = np.asarray(config.prior_mean, dtype=float).copy()
        if means.shape != (n_y,):
            raise InputError(f"prior_mean must have length {n_y}")
    else:
        means = Y.mean(axis=0) if config.center else np.zeros(n_y)
    if config.prior_covariance is not None:
        gamma = np.asarray(config.prior_covariance, dtype=float)
        if gamma.shape != (n_y, n_y):
            raise InputError(f"prior_covariance must be {n_y}x{n_y}")
    else:
        gamma = np.cov(Y, rowvar=False, ddof=1).reshape(n_y, n_y)
    gamma, jitter = regularize_covariance(gamma, config.jitter_start, config.jitter_max)
    D = np.diag(gamma).copy()

    K = gram(X_t, params=config.kernel)
    system = factorize(gamma, K, D, config.error_scale)
    targets = Y - means
    alpha = system.solve(targets)
    weights = alpha @ gamma
    meta = {"n_t": n_t, "n_y": n_y, "n_x": ts.X.shape[1], "jitter": jitter,
            "dropped_predictors": dropped, "system_dim": n_t * n_y}
    return TrainedGprModel(
        stats=stats, kept=kept, X_t=X_t, attribute_means=means, gamma_y=gamma,
        D=D, error_scale=float(config.error_scale), kernel=config.kernel,
        center=config.center, system=system,
        centered_targets=targets.reshape(-1, order="F"), weights=weights,
        attribute_names=list(ts.attribute_names),
        predictor_names=list(ts.predictor_names), metadata=meta)


def _predict_prepared(model, Z):
    sysm = model.system
    K_s = gram(Z, model.X_t, params=model.kernel)
    means = model.attribute_means + K_s @ model.weights
    Q = K_s @ sysm.V
    c = (Q * Q) @ (1.0 / sysm.denom)
    G = sysm.W * sysm.s[None, :]
    prior = model.gamma_y + model.error_scale * np.diag(model.D)
    covs = prior[None] - np.einsum("ra,ma,ca->mrc", G, c, G)
    covs = 0.5 * (covs + np.swapaxes(covs, 1, 2))
    return means, covs


def predict(model: TrainedGprModel, x_star) -> PredictiveDistribution:
    """Predictive mean and covariance for a single plot."""
    x_star = np.asarray(x_star, dtype=float)
    if x_star.ndim != 1:
        raise InputError("x_star must be a single predictor vector")
    means, covs = _predict_prepared(model, model.prepare_inputs(x_star))
    return PredictiveDistribution(mean=means[0], covariance=covs[0])


def predict_batch(model: TrainedGprModel, X_star, plot_ids=None, chunk=256):
    """Elementwise :func:`predict` over a list of plots, order preserved."""
    X_star = list(X_star)
    if not X_star:
        return []
    if plot_ids is None:
        plot_ids = list(range(len(X_star)))
    out = []
    for start in range(0, len(X_star), chunk):
        rows = []
        for pid, x in zip(plot_ids[start:start + chunk], X_star[start:start + chunk]):
            try:
                rows.append(model.prepare_inputs(np.asarray(x, dtype=float).reshape(1, -1))[0])
            except InputError as exc:
                raise PredictionError(str(exc), plot_id=pid) from exc
        means, covs = _predict_prepared(model, np.array(rows))
        out.extend(PredictiveDistribution(mean=m, covariance=c) for m, c in zip(means, covs))
    return out
