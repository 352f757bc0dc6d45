"""Cross-validation harness, accuracy/calibration metrics and totals.

Bias is reported as predicted minus observed (positive = overestimation).
Relative metrics divide by the mean observed value of the evaluated plots.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from . import gpr
from .baselines import annealing, bayes, msn
from .dataio import QUANTITIES, SPECIES, TOTAL_QUANTITIES, Dataset
from .errors import ForestGPError, InputError
from .truncation import Z975, correct_interval, correct_prediction

log = logging.getLogger(__name__)

METHODS = ("gpr", "knn", "bayes")
TOTAL_NAMES = tuple(f"total_{q}" for q in TOTAL_QUANTITIES)
DEFAULT_SIZES = tuple(range(20, 401, 20))


def summation_vectors(attribute_names):
    """0/1 rows selecting the species columns that add up to each total."""
    names = list(attribute_names)
    S = np.zeros((len(TOTAL_QUANTITIES), len(names)))
    for r, q in enumerate(TOTAL_QUANTITIES):
        for s in SPECIES:
            S[r, names.index(f"{s}_{q}")] = 1.0
    return S


@dataclass(frozen=True)
class Totals:
    names: tuple
    mean: np.ndarray
    sd: np.ndarray
    point: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


def aggregate_totals(mean, covariance=None, point=None, attribute_names=None, level=0.95):
    """Stand totals (N, BA, V) summed over species.

    ``mean`` may be a :class:`~forestgp.gpr.PredictiveDistribution`, in which
    case the covariance is taken from it.  The total of a Gaussian vector is
    Gaussian with variance ``s^T C s``; the interval is the zero-truncated
    correction of that marginal.  ``point`` (e.g. the non-negative corrected
    estimate) is summed for the reported point value; it defaults to the mean.
    """
    from .dataio import ATTRIBUTE_NAMES
    if isinstance(mean, gpr.PredictiveDistribution):
        mean, covariance = mean.mean, mean.covariance
    mean = np.asarray(mean, dtype=float)
    S = summation_vectors(ATTRIBUTE_NAMES if attribute_names is None else attribute_names)
    t_mean = S @ mean
    t_point = S @ (mean if point is None else np.asarray(point, dtype=float))
    if covariance is None:
        nan = np.full(len(t_mean), np.nan)
        return Totals(TOTAL_NAMES, t_mean, nan, t_point, nan, nan.copy())
    var = np.einsum("ri,ij,rj->r", S, np.asarray(covariance, dtype=float), S)
    sd = np.sqrt(np.maximum(var, 0.0))
    lower, upper = np.empty_like(sd), np.empty_like(sd)
    for r in range(len(sd)):
        if sd[r] > 0:
            lower[r], upper[r] = correct_interval(t_mean[r], sd[r], level)
        else:
            lower[r] = upper[r] = max(t_mean[r], 0.0)
    return Totals(TOTAL_NAMES, t_mean, sd, t_point, lower, upper)


@dataclass
class PredictionRecord:
    """One plot's prediction by one method, covering attributes and totals."""

    plot_id: str
    method: str
    targets: tuple
    point: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    observed: np.ndarray
    corrected: np.ndarray | None = None
    n_t: int | None = None
    rep: int | None = None


@dataclass
class MetricsTable:
    """Rows are dicts with keys group, name, rmse_pct, bias_pct, ci_pct, n."""

    method: str
    rows: list
    n_evaluations: int
    n_failed: int = 0

    def row(self, name):
        return next(r for r in self.rows if r["name"] == name)

    def values(self, key, group="attribute"):
        return np.array([r[key] for r in self.rows if r["group"] == group], dtype=float)


def _relative(err, obs):
    m = obs.mean()
    if not m > 0:
        return np.nan, np.nan
    return float(100.0 * np.sqrt(np.mean(err ** 2)) / m), float(100.0 * np.mean(err) / m)


def metrics(records) -> MetricsTable:
    """RMSE%, bias% and interval coverage CI% per target.

    Undefined values (zero observed mean, no intervals) are NaN.  Besides one
    row per target there is a per-species mean row and an ``all`` row
    averaging the species-specific attributes.
    """
    records = list(records)
    if not records:
        raise InputError("no prediction records")
    targets = records[0].targets
    P = np.array([r.point for r in records])
    L = np.array([r.lower for r in records])
    U = np.array([r.upper for r in records])
    O = np.array([r.observed for r in records])
    rows = []
    for j, name in enumerate(targets):
        rmse, bias = _relative(P[:, j] - O[:, j], O[:, j])
        has = np.isfinite(L[:, j]) & np.isfinite(U[:, j])
        ci = (float(100.0 * np.mean((O[has, j] >= L[has, j]) & (O[has, j] <= U[has, j])))
              if has.any() else np.nan)
        rows.append({"group": "total" if name in TOTAL_NAMES else "attribute",
                     "name": name, "rmse_pct": rmse, "bias_pct": bias, "ci_pct": ci,
                     "n": len(records)})
    attr_rows = [r for r in rows if r["group"] == "attribute"]

    def summary(group, name, sel):
        out = {"group": group, "name": name, "n": len(records)}
        for key in ("rmse_pct", "bias_pct", "ci_pct"):
            vals = np.array([r[key] for r in sel], dtype=float)
            out[key] = float(np.nanmean(vals)) if np.isfinite(vals).any() else np.nan
        rows.append(out)

    for s in SPECIES:
        summary("species", s, [r for r in attr_rows if r["name"].startswith(s + "_")])
    summary("all", "all", attr_rows)
    return MetricsTable(method=records[0].method, rows=rows, n_evaluations=len(records))


# --------------------------------------------------------------------------
# per-fold prediction for each method
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class EvalConfig:
    gpr: gpr.GprConfig = gpr.GprConfig()
    k: int = 5
    weighted: bool = False
    n_select: int = 10
    sa_schedule: annealing.SaSchedule = annealing.SaSchedule()
    sa_seed: int = 0
    # fixed kNN predictor subset; selected by annealing on the full data if None
    knn_subset: tuple | None = None
    mcmc: bayes.McmcSettings = bayes.McmcSettings()


def _targets(attribute_names):
    return tuple(attribute_names) + TOTAL_NAMES


def _observed(ds, idx):
    S = summation_vectors(ds.attribute_names)
    y = ds.Y[idx]
    return np.concatenate([y, S @ y])


def predict_gpr(ds, train_idx, test_idx, config: EvalConfig, n_t=None, rep=None):
    model = gpr.train(gpr.TrainingSet(ds.X[train_idx], ds.Y[train_idx],
                                      list(ds.attribute_names), ds.predictor_names),
                      config.gpr)
    out = []
    for i, dist in zip(test_idx, gpr.predict_batch(model, ds.X[test_idx],
                                                   [ds.plot_ids[i] for i in test_idx])):
        corr = correct_prediction(dist)
        tot = aggregate_totals(dist, point=corr.point, attribute_names=ds.attribute_names)
        out.append(PredictionRecord(
            plot_id=ds.plot_ids[i], method="gpr", targets=_targets(ds.attribute_names),
            point=np.concatenate([corr.point, tot.point]),
            lower=np.concatenate([corr.lower, tot.lower]),
            upper=np.concatenate([corr.upper, tot.upper]),
            observed=_observed(ds, i),
            corrected=np.concatenate([corr.corrected, tot.mean - Z975 * tot.sd < 0]),
            n_t=n_t, rep=rep))
    return out


def predict_knn(ds, train_idx, test_idx, config: EvalConfig, n_t=None, rep=None):
    if config.knn_subset is None:
        raise InputError("knn evaluation needs a predictor subset")
    model = msn.knn_fit(ds.X[train_idx], ds.Y[train_idx], config.knn_subset,
                        k=config.k, weighted=config.weighted)
    preds = msn.knn_predict_batch(model, ds.X[test_idx])
    S = summation_vectors(ds.attribute_names)
    nan = np.full(len(_targets(ds.attribute_names)), np.nan)
    return [PredictionRecord(
        plot_id=ds.plot_ids[i], method="knn", targets=_targets(ds.attribute_names),
        point=np.concatenate([p, S @ p]), lower=nan, upper=nan.copy(),
        observed=_observed(ds, i), n_t=n_t, rep=rep) for i, p in zip(test_idx, preds)]


def predict_bayes(ds, train_idx, test_idx, config: EvalConfig, n_t=None, rep=None):
    model = bayes.bayes_linear_fit(ds.X[train_idx], ds.Y[train_idx], config.mcmc)
    S = summation_vectors(ds.attribute_names)
    out = []
    for i in test_idx:
        res = bayes.bayes_linear_predict(model, ds.X[i], seed=config.mcmc.seed ^ int(i),
                                         keep_samples=True)
        tot = res.samples @ S.T
        t_lo, t_hi = np.quantile(tot, [0.025, 0.975], axis=0)
        out.append(PredictionRecord(
            plot_id=ds.plot_ids[i], method="bayes", targets=_targets(ds.attribute_names),
            point=np.concatenate([res.point, tot.mean(axis=0)]),
            lower=np.concatenate([res.lower, t_lo]), upper=np.concatenate([res.upper, t_hi]),
            observed=_observed(ds, i), n_t=n_t, rep=rep))
    return out


PREDICTORS = {"gpr": predict_gpr, "knn": predict_knn, "bayes": predict_bayes}


def select_knn_subset(ds: Dataset, config: EvalConfig) -> EvalConfig:
    """Run predictor selection once on the whole dataset if no subset is fixed."""
    from dataclasses import replace
    if config.knn_subset is not None:
        return config
    n_select = min(config.n_select, ds.n_predictors)
    res = annealing.sa_select_predictors(ds.X, ds.Y, n_select=n_select, k=config.k,
                                         schedule=config.sa_schedule, seed=config.sa_seed)
    log.info("selected predictors %s (objective %.3f)",
             [ds.predictor_names[j] for j in res.subset], res.objective)
    return replace(config, knn_subset=tuple(int(j) for j in res.subset))


# --------------------------------------------------------------------------
# job execution
# --------------------------------------------------------------------------

_STATE = {}


def _init_worker(ds, config):
    _STATE["ds"] = ds
    _STATE["config"] = config


def _run_task(task):
    method, train_idx, test_idx, n_t, rep = task
    ds, config = _STATE["ds"], _STATE["config"]
    # single-threaded BLAS keeps results independent of the worker count
    with threadpool_limits(limits=1):
        try:
            return PREDICTORS[method](ds, train_idx, test_idx, config, n_t=n_t, rep=rep)
        except (ForestGPError, np.linalg.LinAlgError) as exc:
            key = f"{method} n_t={n_t} rep={rep} test={list(map(int, test_idx))}"
            return f"{key}: {exc}"


def run_tasks(ds, config, tasks, jobs=1, progress=None):
    """Execute fold tasks, returning results in task order.

    Failed tasks come back as strings describing the failure.
    """
    jobs = max(1, int(jobs or 1))
    if jobs == 1:
        _init_worker(ds, config)
        results = []
        for i, t in enumerate(tasks):
            results.append(_run_task(t))
            if progress:
                progress(i + 1, len(tasks))
        return results
    chunksize = max(1, len(tasks) // (jobs * 8))
    with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker,
                             initargs=(ds, config)) as pool:
        results = []
        for i, r in enumerate(pool.map(_run_task, tasks, chunksize=chunksize)):
            results.append(r)
            if progress:
                progress(i + 1, len(tasks))
        return results


@dataclass
class EvalResult:
    records: list
    tables: dict
    failures: list = field(default_factory=list)


def _collect(results):
    records, failures = [], []
    for r in results:
        if isinstance(r, str):
            failures.append(r)
        else:
            records.extend(r)
    return records, failures


def loocv(ds: Dataset, methods=("gpr",), config: EvalConfig = EvalConfig(), jobs=1,
          progress=None) -> EvalResult:
    """Leave-one-out cross-validation; ``tables`` maps method to MetricsTable."""
    if isinstance(methods, str):
        methods = (methods,)
    if ds.Y is None:
        raise InputError("dataset has no attribute columns")
    if ds.n < 3:
        raise InputError("leave-one-out needs at least 3 plots")
    if "knn" in methods:
        config = select_knn_subset(ds, config)
    everything = np.arange(ds.n)
    tasks = [(m, np.delete(everything, i), np.array([i]), ds.n - 1, None)
             for m in methods for i in range(ds.n)]
    records, failures = _collect(run_tasks(ds, config, tasks, jobs, progress))
    tables = {}
    for m in methods:
        recs = [r for r in records if r.method == m]
        if recs:
            tables[m] = metrics(recs)
            tables[m].n_failed = sum(f.startswith(m + " ") for f in failures)
    for f in failures:
        log.warning("fold failed: %s", f)
    return EvalResult(records, tables, failures)


def rep_split(n, size, base_seed, rep):
    """Training indices and one test index for a repetition (sorted training)."""
    rng = np.random.default_rng([base_seed + rep, size])
    perm = rng.permutation(n)
    return np.sort(perm[:size]), perm[size:size + 1]


def size_experiment(ds: Dataset, sizes=DEFAULT_SIZES, reps=2000, base_seed=0,
                    methods=("gpr", "knn"), config: EvalConfig = EvalConfig(), jobs=1,
                    progress=None) -> EvalResult:
    """Random-subsampling experiment over training set sizes.

    For each size and repetition, ``size`` training plots are drawn without
    replacement and a single test plot from the rest.  ``tables`` maps
    ``(method, size)`` to the MetricsTable over all repetitions.
    """
    if isinstance(methods, str):
        methods = (methods,)
    sizes = [int(s) for s in sizes]
    if not sizes:
        raise InputError("no training sizes given")
    if max(sizes) >= ds.n:
        raise InputError(f"training size {max(sizes)} leaves no test plot (n={ds.n})")
    if min(sizes) < 2:
        raise InputError("training sizes must be at least 2")
    if "knn" in methods:
        config = select_knn_subset(ds, config)
    tasks = []
    for size in sizes:
        for rep in range(reps):
            tr, te = rep_split(ds.n, size, base_seed, rep)
            tasks.extend((m, tr, te, size, rep) for m in methods)
    records, failures = _collect(run_tasks(ds, config, tasks, jobs, progress))
    tables = {}
    for m in methods:
        for size in sizes:
            recs = [r for r in records if r.method == m and r.n_t == size]
            if recs:
                t = metrics(recs)
                t.n_failed = sum(f.startswith(f"{m} n_t={size} ") for f in failures)
                tables[(m, size)] = t
    return EvalResult(records, tables, failures)


def size_summary(tables):
    """Lowest, mean and highest attribute RMSE%, bias% and CI% per method and size."""
    rows = []
    for (m, size), t in sorted(tables.items()):
        for key in ("rmse_pct", "bias_pct", "ci_pct"):
            v = t.values(key)
            ok = np.isfinite(v)
            rows.append({"method": m, "n_t": size, "metric": key,
                         "min": float(v[ok].min()) if ok.any() else np.nan,
                         "mean": float(v[ok].mean()) if ok.any() else np.nan,
                         "max": float(v[ok].max()) if ok.any() else np.nan})
    return rows


def default_jobs():
    return max(1, os.cpu_count() or 1)
