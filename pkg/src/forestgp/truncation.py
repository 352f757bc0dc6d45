"""Non-negativity corrections for Gaussian predictions.

The point estimate is the mode of the predictive Gaussian restricted to the
non-negative orthant.  Intervals are corrected marginal by marginal: a lower
bound below zero is moved to zero and the upper bound is chosen so that the
zero-truncated marginal keeps 95% of its mass inside the interval.  The
result is not a joint credible region unless the covariance is diagonal.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from .errors import InputError, NumericalError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CorrectedPrediction:
    point: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    corrected: np.ndarray
    warnings: tuple = field(default=())

    @property
    def intervals(self):
        return np.column_stack([self.lower, self.upper])


def nonneg_quadratic(P, mu, tol=1e-12, max_iter=None):
    """Minimize ``(y - mu)^T P (y - mu)`` over ``y >= 0`` for positive definite ``P``.

    Lawson-Hanson style primal active set: grow the passive (free) set one
    index at a time by largest negative gradient, and step back towards the
    previous feasible iterate whenever the unconstrained subproblem leaves
    the orthant.
    """
    P = np.asarray(P, dtype=float)
    mu = np.asarray(mu, dtype=float)
    n = mu.shape[0]
    c = P @ mu
    y = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    max_iter = 30 * n if max_iter is None else max_iter
    scale = tol * max(1.0, float(np.max(np.abs(c))))
    for _ in range(max_iter):
        w = c - P @ y  # half the negative gradient
        w_free = np.where(passive, -np.inf, w)
        j = int(np.argmax(w_free))
        if passive.all() or w_free[j] <= scale:
            return y
        passive[j] = True
        while True:
            s = np.zeros(n)
            idx = np.flatnonzero(passive)
            s[idx] = np.linalg.solve(P[np.ix_(idx, idx)], c[idx])
            if np.all(s[idx] > 0):
                y = s
                break
            neg = idx[s[idx] <= 0]
            alpha = np.min(y[neg] / (y[neg] - s[neg]))
            y = y + alpha * (s - y)
            passive &= y > scale
            y[~passive] = 0.0
    raise NumericalError("active-set iteration did not converge")


def map_nonneg(dist, jitter_max=1e-6):
    """Mode of the predictive Gaussian restricted to ``y >= 0``.

    Returns ``(point, warning)``; ``warning`` is ``None`` unless the
    covariance could not be factorized, in which case the elementwise clamp
    ``max(mu, 0)`` is returned instead.
    """
    mu = np.asarray(dist.mean, dtype=float)
    if np.all(mu >= 0):
        return mu.copy(), None
    cov = np.asarray(dist.covariance, dtype=float)
    cov = 0.5 * (cov + cov.T)
    scale = float(np.mean(np.diag(cov)))
    scale = scale if scale > 0 else 1.0
    for lam in [0.0] + [10.0 ** k for k in range(-12, int(round(math.log10(jitter_max))) + 1)]:
        try:
            L = np.linalg.cholesky(cov + lam * scale * np.eye(len(mu)))
            break
        except np.linalg.LinAlgError:
            continue
    else:
        msg = "predictive covariance singular; clamped negative components to zero"
        log.warning(msg)
        return np.maximum(mu, 0.0), msg
    Linv = np.linalg.solve(L, np.eye(len(mu)))
    P = Linv.T @ Linv
    return nonneg_quadratic(P, mu), None


Z975 = float(stats.norm.ppf(0.975))


def correct_interval(mu, sigma, level=0.95, tol=1e-10, max_iter=400):
    """Equal-tail interval, truncated at zero when its lower end is negative.

    For ``a = mu - z sigma < 0`` the corrected upper bound ``b`` solves
    ``Phi(b) = level + (1 - level) Phi(0)``.  The equivalent survival form
    ``1 - Phi(b) = (1 - level) (1 - Phi(0))`` is bisected on log scale so
    very negative means stay accurate.
    """
    if not (np.isfinite(sigma) and sigma > 0):
        raise InputError(f"sigma must be positive, got {sigma}")
    if not np.isfinite(mu):
        raise InputError(f"mu must be finite, got {mu}")
    z = float(stats.norm.ppf(0.5 + level / 2))
    a, b = mu - z * sigma, mu + z * sigma
    if a >= 0:
        return a, b
    # log(1 - Phi(t)) = log_ndtr(-t)
    target = math.log1p(-level) + special.log_ndtr(mu / sigma)

    def excess(t):
        return special.log_ndtr(-(t - mu) / sigma) - target

    lo, hi = 0.0, max(mu, 0.0) + 10.0 * sigma
    if excess(hi) > 0:
        raise NumericalError("upper bound bracket does not contain the root")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * sigma:
            return 0.0, 0.5 * (lo + hi)
    raise NumericalError("bisection did not converge")


def correct_prediction(dist, level=0.95) -> CorrectedPrediction:
    """Non-negative point estimate plus corrected marginal intervals."""
    point, warning = map_nonneg(dist)
    sd = np.sqrt(np.maximum(np.diag(np.asarray(dist.covariance, dtype=float)), 0.0))
    mean = np.asarray(dist.mean, dtype=float)
    lower = np.empty_like(mean)
    upper = np.empty_like(mean)
    flags = np.zeros(mean.shape, dtype=bool)
    z = float(stats.norm.ppf(0.5 + level / 2))
    for i, (m, s) in enumerate(zip(mean, sd)):
        if s > 0:
            lower[i], upper[i] = correct_interval(m, s, level)
        else:
            lower[i] = upper[i] = max(m, 0.0)
        flags[i] = m - z * s < 0
    return CorrectedPrediction(point=point, lower=lower, upper=upper, corrected=flags,
                               warnings=(warning,) if warning else ())
