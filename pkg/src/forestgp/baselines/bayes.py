"""Bayesian linear inversion baseline sampled with random-walk Metropolis.

Predictors are modelled as ``x = A phi(y) + e`` with the affine basis
``phi(y) = [1, y]`` and Gaussian residuals; the attributes get a Gaussian
prior from the training sample.  The posterior over a new plot's attributes
is that product restricted to ``y >= 0``.  Both factors are Gaussian in
``y``, so the log density reduces to ``-0.5 (y - m)^T H (y - m)`` and the
sampler runs in whitened coordinates ``y = m + L u`` with ``L L^T = H^{-1}``.

This is a simplified reference: residual statistics are global rather than
conditional on ``y``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from ..dataio import StandardizationStats, standardize
from ..errors import InputError, NumericalError, TrainingError
from ..gpr import regularize_covariance
from ..truncation import nonneg_quadratic

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class McmcSettings:
    n_iter: int = 50_000
    burn_in: int = 10_000
    target_accept: float = 0.3
    adapt_every: int = 100
    seed: int = 0


@dataclass(frozen=True)
class BayesLinearModel:
    A: np.ndarray
    resid_mean: np.ndarray
    resid_cov: np.ndarray
    prior_mean: np.ndarray
    prior_cov: np.ndarray
    stats: StandardizationStats
    kept: np.ndarray
    settings: McmcSettings = McmcSettings()
    basis: str = "affine"
    ridge: float = 0.0

    def with_settings(self, **kw):
        return replace(self, settings=replace(self.settings, **kw))


@dataclass(frozen=True)
class BayesPrediction:
    point: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    acceptance_rate: float
    samples: np.ndarray | None = None
    warnings: tuple = field(default=())


def _affine_basis(Y):
    return np.hstack([np.ones((Y.shape[0], 1)), Y])


def bayes_linear_fit(X, Y, settings: McmcSettings = McmcSettings()) -> BayesLinearModel:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float)
    n_t, n_y = Y.shape
    if n_t <= n_y + 1:
        raise TrainingError(f"need more than {n_y + 1} training plots, got {n_t}")
    Z, stats = standardize(X)
    kept = ~stats.constant
    Z = Z[:, kept]
    Phi = _affine_basis(Y)
    G = Phi.T @ Phi
    scale = float(np.mean(np.diag(G)))
    for ridge in (0.0, 1e-12, 1e-10, 1e-8, 1e-6, 1e-4):
        try:
            L = np.linalg.cholesky(G + ridge * scale * np.eye(G.shape[0]))
            if ridge == 0.0 and np.linalg.cond(G) > 1e12:
                continue
            break
        except np.linalg.LinAlgError:
            continue
    else:
        raise NumericalError("design matrix could not be regularized")
    coef = np.linalg.solve(L.T, np.linalg.solve(L, Phi.T @ Z))
    A = coef.T
    R = Z - Phi @ coef
    resid_cov, _ = regularize_covariance(np.cov(R, rowvar=False).reshape(Z.shape[1], -1),
                                         start=1e-10, stop=1e-2)
    prior_cov, _ = regularize_covariance(np.cov(Y, rowvar=False).reshape(n_y, n_y),
                                         start=1e-10, stop=1e-2)
    return BayesLinearModel(A=A, resid_mean=R.mean(axis=0), resid_cov=resid_cov,
                            prior_mean=Y.mean(axis=0), prior_cov=prior_cov,
                            stats=stats, kept=kept, settings=settings,
                            ridge=ridge * scale)


def gaussian_posterior(model: BayesLinearModel, z):
    """Mean and precision of the untruncated posterior for standardized ``z``."""
    A_y = model.A[:, 1:]
    offset = model.A[:, 0] + model.resid_mean
    Pe = np.linalg.inv(model.resid_cov)
    Py = np.linalg.inv(model.prior_cov)
    H = A_y.T @ Pe @ A_y + Py
    H = 0.5 * (H + H.T)
    g = A_y.T @ Pe @ (z - offset) + Py @ model.prior_mean
    return np.linalg.solve(H, g), H


def bayes_linear_predict(model: BayesLinearModel, x_star, n_samples=None, seed=None,
                         keep_samples=False) -> BayesPrediction:
    """Posterior mean and 2.5/97.5% quantiles from a Metropolis chain.

    ``n_samples`` is the number of retained draws (defaults to
    ``n_iter - burn_in`` from the model settings).
    """
    st = model.settings
    burn = st.burn_in
    n_keep = st.n_iter - burn if n_samples is None else int(n_samples)
    seed = st.seed if seed is None else seed
    x_star = np.asarray(x_star, dtype=float)
    if x_star.shape != (model.stats.mean.shape[0],):
        raise InputError(f"expected {model.stats.mean.shape[0]} predictors")
    z, _ = standardize(x_star[None, :], model.stats)
    m, H = gaussian_posterior(model, z[0, model.kept])
    d = m.shape[0]
    L = np.linalg.cholesky(np.linalg.inv(H))

    # start at the constrained mode, expressed in whitened coordinates
    y0 = nonneg_quadratic(H, m)
    u = np.linalg.solve(L, y0 - m)
    y_cur = m + L @ u
    if not np.all(y_cur >= 0):
        y_cur = y0
    logp = -0.5 * u @ u
    rng = np.random.default_rng(seed)
    log_step = np.log(2.38 / np.sqrt(d))
    total = burn + n_keep
    samples = np.empty((n_keep, d))
    accepted = window = kept_accepts = 0
    n_adapt = 0
    for it in range(total):
        prop = u + np.exp(log_step) * rng.standard_normal(d)
        y = m + L @ prop
        if np.all(y >= 0):
            lp = -0.5 * prop @ prop
            if np.log(rng.random()) < lp - logp:
                u, logp, y_cur = prop, lp, y
                accepted += 1
                if it >= burn:
                    kept_accepts += 1
        window += 1
        if it < burn and window == st.adapt_every:
            n_adapt += 1
            rate = accepted / window
            log_step += (rate - st.target_accept) / np.sqrt(n_adapt)
            accepted = window = 0
        if it >= burn:
            samples[it - burn] = y_cur
    if not np.all(np.isfinite(samples)):
        raise NumericalError("MCMC chain produced non-finite samples")
    rate = kept_accepts / max(n_keep, 1)
    warnings = ()
    if not 0.05 <= rate <= 0.7:
        msg = f"acceptance rate {rate:.3f} outside [0.05, 0.7]"
        log.warning(msg)
        warnings = (msg,)
    lower, upper = np.quantile(samples, [0.025, 0.975], axis=0)
    return BayesPrediction(point=samples.mean(axis=0), lower=lower, upper=upper,
                           acceptance_rate=rate,
                           samples=samples if keep_samples else None, warnings=warnings)
