"""Simulated-annealing selection of predictors for MSN kNN.

The objective is the mean over attributes of the leave-one-out kNN RMSE%
on the training data, with the MSN projection fitted on all plots and each
plot's own row excluded from its neighbour search.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from ..errors import InputError
from .msn import msn_fit

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SaSchedule:
    cooling: float = 0.95
    proposals_per_temperature: int = 200
    max_temperatures: int = 50
    patience: int = 10
    # random subsets used to set the initial temperature
    n_calibration: int = 50


@dataclass
class AnnealingResult:
    subset: np.ndarray
    objective: float
    n_evaluations: int
    # best objective after each temperature stage
    history: list = field(default_factory=list)


def relative_rmse(pred, Y):
    """Per-attribute RMSE% (NaN where the observed mean is zero)."""
    mean = Y.mean(axis=0)
    rmse = np.sqrt(np.mean((pred - Y) ** 2, axis=0))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(mean > 0, 100.0 * rmse / mean, np.nan)


def loo_knn_objective(X, Y, subset, k=5):
    """Mean leave-one-out kNN RMSE% over attributes with a positive mean."""
    proj = msn_fit(X, Y, subset)
    Z = proj.project(X)
    D = cdist(Z, Z)
    np.fill_diagonal(D, np.inf)
    nbrs = np.argsort(D, axis=1, kind="stable")[:, :k]
    pred = Y[nbrs].mean(axis=1)
    return float(np.nanmean(relative_rmse(pred, Y)))


def sa_select_predictors(X, Y, n_select=10, k=5, schedule: SaSchedule = SaSchedule(),
                         seed=0) -> AnnealingResult:
    """Pick ``n_select`` predictor columns minimizing :func:`loo_knn_objective`.

    Moves swap one selected predictor for an unselected one.  Temperatures
    start at the spread of the objective over random subsets and cool
    geometrically; the run stops after ``max_temperatures`` stages or
    ``patience`` consecutive stages without a new best.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float)
    n_x = X.shape[1]
    if not 1 <= n_select <= n_x:
        raise InputError(f"n_select={n_select} must lie in [1, {n_x}]")
    rng = np.random.default_rng(seed)
    cache = {}

    def evaluate(sub):
        key = tuple(sorted(sub))
        if key not in cache:
            cache[key] = loo_knn_objective(X, Y, key, k)
        return cache[key]

    if n_select == n_x:
        full = np.arange(n_x)
        return AnnealingResult(full, evaluate(full), len(cache))

    samples = [evaluate(rng.choice(n_x, n_select, replace=False))
               for _ in range(schedule.n_calibration)]
    temperature = float(np.std(samples)) or 1.0

    current = sorted(rng.choice(n_x, n_select, replace=False).tolist())
    current_obj = evaluate(current)
    best, best_obj = list(current), current_obj
    history, stale = [], 0
    for stage in range(schedule.max_temperatures):
        improved = False
        for _ in range(schedule.proposals_per_temperature):
            out_pos = int(rng.integers(n_select))
            unselected = np.setdiff1d(np.arange(n_x), current)
            new = int(unselected[rng.integers(len(unselected))])
            candidate = sorted(current[:out_pos] + current[out_pos + 1:] + [new])
            obj = evaluate(candidate)
            delta = obj - current_obj
            if delta <= 0 or rng.random() < math.exp(-delta / temperature):
                current, current_obj = candidate, obj
                if obj < best_obj:
                    best, best_obj, improved = list(candidate), obj, True
        history.append(best_obj)
        log.debug("SA stage %d T=%.4g best=%.4f", stage, temperature, best_obj)
        stale = 0 if improved else stale + 1
        if stale >= schedule.patience:
            break
        temperature *= schedule.cooling
    return AnnealingResult(np.array(best), best_obj, len(cache), history)
