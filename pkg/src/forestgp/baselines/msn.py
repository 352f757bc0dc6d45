"""Most similar neighbour (MSN) distance and k-nearest-neighbour imputation.

The MSN distance comes from a canonical correlation analysis between the
(standardized) selected predictors and the (standardized) attributes:

    d^2(u, v) = (u - v)^T G L^2 G^T (u - v)

with ``G`` the predictor-side canonical coefficients (normalized so that
``G^T S_xx G = I``) and ``L`` the canonical correlations.  Equivalently it is
the Euclidean distance between ``project(u)`` and ``project(v)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from ..dataio import StandardizationStats, standardize
from ..errors import InputError

RIDGE_LADDER = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2)


@dataclass(frozen=True)
class MsnProjection:
    subset: np.ndarray
    x_stats: StandardizationStats
    coef: np.ndarray
    canon_corr: np.ndarray
    ridge: float

    def project(self, X):
        """Map full predictor rows into the space where MSN distance is Euclidean."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Z, _ = standardize(X[:, self.subset], self.x_stats)
        return (Z @ self.coef) * self.canon_corr

    def distance(self, u, v):
        pu, pv = self.project(u)[0], self.project(v)[0]
        return float(np.sqrt(np.sum((pu - pv) ** 2)))

    @property
    def metric(self):
        """Matrix ``G L^2 G^T`` acting on standardized selected predictors."""
        return (self.coef * self.canon_corr ** 2) @ self.coef.T


def _chol_with_ridge(S, lam):
    return np.linalg.cholesky(S + lam * np.eye(S.shape[0]))


def msn_fit(X, Y, subset) -> MsnProjection:
    """Canonical correlation analysis of ``X[:, subset]`` against ``Y``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    subset = np.asarray(sorted(set(int(j) for j in subset)), dtype=int)
    if subset.size == 0:
        raise InputError("predictor subset is empty")
    if subset.min() < 0 or subset.max() >= X.shape[1]:
        raise InputError("predictor subset index out of range")
    n = X.shape[0]
    if n <= subset.size:
        raise InputError(f"need more plots ({n}) than selected predictors ({subset.size})")
    Zx, x_stats = standardize(X[:, subset])
    Zy, _ = standardize(Y)
    Sxx = Zx.T @ Zx / (n - 1)
    Syy = Zy.T @ Zy / (n - 1)
    Sxy = Zx.T @ Zy / (n - 1)
    for ridge in RIDGE_LADDER:
        try:
            Lx = _chol_with_ridge(Sxx, ridge)
            Ly = _chol_with_ridge(Syy, ridge)
            break
        except np.linalg.LinAlgError:
            continue
    else:
        raise InputError("canonical correlation analysis failed even with ridge")
    A = np.linalg.solve(Lx, np.linalg.solve(Ly, Sxy.T).T)
    U, rho, _ = np.linalg.svd(A, full_matrices=False)
    coef = np.linalg.solve(Lx.T, U)
    return MsnProjection(subset=subset, x_stats=x_stats, coef=coef,
                         canon_corr=np.clip(rho, 0.0, 1.0), ridge=ridge)


@dataclass(frozen=True)
class KnnModel:
    """Fitted kNN imputer: projection plus projected training plots."""

    projection: MsnProjection
    Z_train: np.ndarray
    Y_train: np.ndarray
    k: int = 5
    weighted: bool = False


def knn_fit(X, Y, subset, k=5, weighted=False) -> KnnModel:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float)
    if not 1 <= k <= X.shape[0]:
        raise InputError(f"k={k} must lie in [1, {X.shape[0]}]")
    proj = msn_fit(X, Y, subset)
    return KnnModel(projection=proj, Z_train=proj.project(X), Y_train=Y.reshape(len(X), -1),
                    k=k, weighted=weighted)


def neighbours(Z_train, z, k):
    """Indices of the ``k`` nearest rows, ties broken by ascending index."""
    d = cdist(np.atleast_2d(z), Z_train)[0]
    order = np.argsort(d, kind="stable")[:k]
    return order, d[order]


def _aggregate(Y, idx, d, weighted):
    if not weighted:
        return Y[idx].mean(axis=0)
    if np.any(d == 0):
        return Y[idx[d == 0]].mean(axis=0)
    w = 1.0 / d
    return (w[:, None] * Y[idx]).sum(axis=0) / w.sum()


def knn_predict(model: KnnModel, x_star, k=None):
    """Mean attribute vector of the ``k`` MSN-nearest training plots."""
    k = model.k if k is None else k
    n_t = model.Z_train.shape[0]
    if not 1 <= k <= n_t:
        raise InputError(f"k={k} must lie in [1, {n_t}]")
    z = model.projection.project(x_star)
    idx, d = neighbours(model.Z_train, z, k)
    return _aggregate(model.Y_train, idx, d, model.weighted)


def knn_predict_batch(model: KnnModel, X_star):
    Z = model.projection.project(X_star)
    D = cdist(Z, model.Z_train)
    order = np.argsort(D, axis=1, kind="stable")[:, :model.k]
    return np.array([
        _aggregate(model.Y_train, order[i], D[i, order[i]], model.weighted)
        for i in range(len(Z))])
