import numpy as np
import pytest

from forestgp import gpr
from forestgp.baselines import SaSchedule
from forestgp.baselines.msn import knn_fit, knn_predict
from forestgp.dataio import ATTRIBUTE_NAMES, Dataset, SynthConfig, generate_synthetic
from forestgp.errors import InputError
from forestgp.evaluation import (
    EvalConfig, PredictionRecord, aggregate_totals, loocv, metrics, rep_split, size_experiment,
    size_summary, summation_vectors)

FAST = EvalConfig(sa_schedule=SaSchedule(proposals_per_temperature=5, max_temperatures=3,
                                         n_calibration=5))


def _records(point, observed, lower=None, upper=None):
    out = []
    for i, (p, o) in enumerate(zip(point, observed)):
        lo = np.full(1, np.nan) if lower is None else np.array([lower[i]])
        hi = np.full(1, np.nan) if upper is None else np.array([upper[i]])
        out.append(PredictionRecord(str(i), "m", ("pine_v",), np.array([p]), lo, hi,
                                    np.array([o])))
    return out


def test_metrics_hand_values():
    t = metrics(_records([12.0, 16.0], [10.0, 20.0]))
    row = t.row("pine_v")
    assert row["rmse_pct"] == pytest.approx(100 * np.sqrt(10) / 15)
    assert row["rmse_pct"] == pytest.approx(21.08, abs=0.005)
    assert row["bias_pct"] == pytest.approx(-100 / 15)
    assert np.isnan(row["ci_pct"])


def test_metrics_perfect_and_shift():
    y = np.array([3.0, 5.0, 10.0])
    t = metrics(_records(y, y))
    assert t.row("pine_v")["rmse_pct"] == 0 and t.row("pine_v")["bias_pct"] == 0
    t = metrics(_records(y + 2.0, y))
    assert t.row("pine_v")["bias_pct"] == pytest.approx(100 * 2 / y.mean())


def test_metrics_ci_and_undefined():
    t = metrics(_records([1, 1, 1, 1], [1, 2, 3, 4], lower=[0, 0, 0, 0], upper=[2, 2, 2, 5]))
    assert t.row("pine_v")["ci_pct"] == 75.0
    t = metrics(_records([1.0, 2.0], [0.0, 0.0]))
    assert np.isnan(t.row("pine_v")["rmse_pct"])
    with pytest.raises(InputError):
        metrics([])


def test_metrics_permutation_invariant(rng):
    p, o = rng.gamma(2, size=20), rng.gamma(2, size=20)
    a = metrics(_records(p, o, p - 1, p + 1))
    perm = rng.permutation(20)
    b = metrics(_records(p[perm], o[perm], (p - 1)[perm], (p + 1)[perm]))
    for key in ("rmse_pct", "bias_pct", "ci_pct"):
        assert a.row("pine_v")[key] == pytest.approx(b.row("pine_v")[key], rel=1e-12)


def test_totals_examples():
    names = ATTRIBUTE_NAMES
    mean = np.zeros(15)
    mean[[2, 7, 12]] = [100.0, 50.0, 25.0]
    cov = np.eye(15)
    tot = aggregate_totals(mean, cov)
    assert tot.names == ("total_n", "total_ba", "total_v")
    assert tot.point[0] == 175.0
    assert tot.sd[0] == pytest.approx(np.sqrt(3))
    S = summation_vectors(names)
    assert S.sum() == 9 and S[0, 2] == S[0, 7] == S[0, 12] == 1


def test_totals_correlated_by_hand(rng):
    C3 = np.array([[4.0, 1.0, -0.5], [1.0, 2.0, 0.3], [-0.5, 0.3, 1.0]])
    cov = np.eye(15)
    idx = [3, 8, 13]  # basal area columns
    cov[np.ix_(idx, idx)] = C3
    expanded = (C3[0, 0] + C3[1, 1] + C3[2, 2] + 2 * C3[0, 1] + 2 * C3[0, 2] + 2 * C3[1, 2])
    tot = aggregate_totals(np.full(15, 10.0), cov)
    assert tot.sd[1] ** 2 == pytest.approx(expanded, abs=1e-12)


def test_totals_from_distribution(rng):
    dist = gpr.PredictiveDistribution(np.full(15, 2.0), np.eye(15) * 9.0)
    tot = aggregate_totals(dist, point=np.full(15, 3.0))
    assert tot.point[2] == 9.0 and tot.mean[2] == 6.0
    assert tot.lower[2] == 0.0  # 6 - 1.96 * sqrt(27) < 0


def test_loocv_fold_sizes(small_ds):
    res = loocv(small_ds, ("gpr",))
    assert len(res.records) == small_ds.n
    assert {r.n_t for r in res.records} == {small_ds.n - 1}
    assert res.tables["gpr"].n_evaluations == small_ds.n
    assert all(np.all(r.point >= 0) for r in res.records)


def test_loocv_identical_plots():
    X = np.tile(np.arange(4.0), (8, 1)) + 1e-3 * np.arange(8)[:, None] * [1, 0, 0, 0]
    Y = np.tile(np.linspace(1, 15, 15), (8, 1))
    ds = Dataset([f"p{i}" for i in range(8)], X, Y, ["x1", "x2", "x3", "x4"])
    cfg = EvalConfig(gpr=gpr.GprConfig(error_scale=1e-6))
    res = loocv(ds, "gpr", cfg)
    assert np.nanmax(res.tables["gpr"].values("rmse_pct")) < 1e-6


def test_loocv_knn_manual_folds(small_ds):
    cfg = EvalConfig(knn_subset=(0, 3, 5), k=5)
    res = loocv(small_ds, "knn", cfg)
    for i in (0, 17, 59):
        keep = np.delete(np.arange(small_ds.n), i)
        model = knn_fit(small_ds.X[keep], small_ds.Y[keep], [0, 3, 5], k=5)
        np.testing.assert_allclose(res.records[i].point[:15], knn_predict(model, small_ds.X[i]))


def test_loocv_jobs_independent(small_ds):
    a = loocv(small_ds, ("gpr", "knn"), FAST, jobs=1)
    b = loocv(small_ds, ("gpr", "knn"), FAST, jobs=2)
    for ra, rb in zip(a.records, b.records):
        assert ra.point.tobytes() == rb.point.tobytes()
        assert ra.upper.tobytes() == rb.upper.tobytes()


def test_loocv_errors(small_ds):
    with pytest.raises(InputError):
        loocv(small_ds.subset([0, 1]), "gpr")


def test_rep_split():
    tr, te = rep_split(100, 20, 7, 3)
    assert len(tr) == 20 and len(te) == 1 and te[0] not in tr
    tr2, te2 = rep_split(100, 20, 7, 3)
    assert tr.tolist() == tr2.tolist() and te.tolist() == te2.tolist()


def test_size_experiment_small(small_ds):
    res = size_experiment(small_ds, sizes=[20, 40], reps=5, base_seed=1,
                          methods=("gpr", "knn"), config=FAST)
    assert set(res.tables) == {("gpr", 20), ("gpr", 40), ("knn", 20), ("knn", 40)}
    assert res.tables[("gpr", 20)].n_evaluations == 5
    again = size_experiment(small_ds, sizes=[20, 40], reps=5, base_seed=1,
                            methods=("gpr", "knn"), config=FAST)
    assert [r.point.tobytes() for r in res.records] == [r.point.tobytes() for r in again.records]
    summary = size_summary(res.tables)
    rm = [r for r in summary if r["metric"] == "rmse_pct" and r["method"] == "gpr"]
    assert len(rm) == 2 and all(r["min"] <= r["mean"] <= r["max"] for r in rm)
    with pytest.raises(InputError):
        size_experiment(small_ds, sizes=[60], reps=1)


def test_failed_folds_are_counted():
    ds = generate_synthetic(SynthConfig(n_plots=12, n_predictors=6, seed=1))
    # bayes needs n_t > n_y + 1 = 16, so every fold fails
    res = loocv(ds, "bayes")
    assert len(res.failures) == 12 and "bayes" not in res.tables
