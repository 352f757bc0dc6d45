"""Matern 3/2 covariance, Gram matrices and the separable multi-output kernel.

All Kronecker-structured objects in the package use attribute-major
ordering: for ``n_y`` attributes and ``n`` plots, entry ``a * n + i`` of a
vectorized quantity belongs to attribute ``a`` at plot ``i``.  This is the
column-major ``vec`` of the ``n x n_y`` matrix whose columns are attributes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import InputError

SQRT3 = np.sqrt(3.0)


@dataclass(frozen=True)
class KernelParams:
    """Parameters of the Matern covariance.

    Only ``nu = 1.5`` is supported.  The signal scale stays at 1 because the
    output covariance enters through the separable kernel instead.
    """

    length_scale: float = 10.0
    signal_sigma: float = 1.0
    nu: float = 1.5

    def __post_init__(self):
        if not (np.isfinite(self.length_scale) and self.length_scale > 0):
            raise InputError(f"length_scale must be positive, got {self.length_scale}")
        if not (np.isfinite(self.signal_sigma) and self.signal_sigma > 0):
            raise InputError(f"signal_sigma must be positive, got {self.signal_sigma}")
        if self.nu != 1.5:
            raise InputError(f"only nu=1.5 is supported, got {self.nu}")


DEFAULT_PARAMS = KernelParams()


def matern32(d, params: KernelParams = DEFAULT_PARAMS):
    """Matern 3/2 covariance as a function of distance.

    Accepts a scalar or an array of non-negative distances and returns the
    same shape.  ``k(0) = signal_sigma**2``.
    """
    d = np.asarray(d, dtype=float)
    if not np.all(np.isfinite(d)):
        raise InputError("distances must be finite")
    if np.any(d < 0):
        raise InputError("distances must be non-negative")
    r = SQRT3 * d / params.length_scale
    out = params.signal_sigma ** 2 * (1.0 + r) * np.exp(-r)
    if out.ndim == 0:
        return float(out)
    return out


def euclidean_distance(x, x2) -> float:
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x.shape != x2.shape or x.ndim != 1:
        raise InputError(f"dimension mismatch: {x.shape} vs {x2.shape}")
    return float(np.sqrt(np.sum((x - x2) ** 2)))


def _as_points(X, name):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise InputError(f"{name} must be a 2-D array of points")
    if X.shape[0] == 0:
        raise InputError(f"{name} is empty")
    return X


def gram(X_a, X_b=None, params: KernelParams = DEFAULT_PARAMS) -> np.ndarray:
    """Kernel matrix ``K[i, j] = k(|X_a[i] - X_b[j]|)``.

    With ``X_b`` omitted the symmetric matrix of ``X_a`` against itself is
    returned, with the diagonal set exactly to ``signal_sigma**2``.
    """
    X_a = _as_points(X_a, "X_a")
    symmetric = X_b is None
    X_b = X_a if symmetric else _as_points(X_b, "X_b")
    if X_a.shape[1] != X_b.shape[1]:
        raise InputError(
            f"dimension mismatch: {X_a.shape[1]} vs {X_b.shape[1]} predictors")
    K = matern32(cdist(X_a, X_b), params)
    if symmetric:
        # cdist is symmetric already, but make the diagonal exact
        np.fill_diagonal(K, params.signal_sigma ** 2)
    return K


def separable_kernel(gamma_y, K_uni) -> np.ndarray:
    """Dense ``gamma_y (x) K_uni`` in attribute-major order.

    Block ``(a, b)`` (rows ``a*n_a:(a+1)*n_a``, columns ``b*n_b:(b+1)*n_b``)
    equals ``gamma_y[a, b] * K_uni``.  Intended for small problems and as a
    reference; :mod:`forestgp.gpr` never materializes this matrix.
    """
    gamma_y = np.asarray(gamma_y, dtype=float)
    K_uni = np.atleast_2d(np.asarray(K_uni, dtype=float))
    if gamma_y.ndim != 2 or gamma_y.shape[0] != gamma_y.shape[1]:
        raise InputError(f"gamma_y must be square, got shape {gamma_y.shape}")
    if not np.allclose(gamma_y, gamma_y.T, rtol=1e-10, atol=1e-12):
        raise InputError("gamma_y must be symmetric")
    return np.kron(gamma_y, K_uni)
