"""Command-line interface.

Exit codes: 0 success, 2 bad input, 3 training failure, 4 prediction
failure, 5 evaluation failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, gpr
from .baselines import annealing, bayes, msn
from .config import RunConfig, load_config
from .dataio import Dataset, format_float, generate_synthetic, load_dataset, save_dataset
from .errors import ForestGPError, InputError, PredictionError, TrainingError
from .evaluation import TOTAL_NAMES, aggregate_totals, loocv, size_experiment, size_summary, summation_vectors
from .persist import load_model, save_model
from .truncation import correct_prediction

EXIT_OK, EXIT_INPUT, EXIT_TRAIN, EXIT_PREDICT, EXIT_EVAL = 0, 2, 3, 4, 5

log = logging.getLogger("forestgp")


class CommandError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _header(cfg: RunConfig, extra=None):
    parts = [f"forestgp {__version__}", f"config_sha256={cfg.digest()}", f"seed={cfg.seed}",
             "bias=predicted-observed"]
    if extra:
        parts.append(extra)
    return "# " + " | ".join(parts) + "\n"


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "NA" if not np.isfinite(v) else format_float(v)
    return str(v)


def _write_table(path, header, columns, rows):
    buf = io.StringIO()
    buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def _progress(label):
    def report(done, total):
        step = max(1, total // 20)
        if done == total or done % step == 0:
            print(f"{label}: {done}/{total}", file=sys.stderr, flush=True)
    return report


def _load(path, code=EXIT_INPUT, require_attributes=True):
    if path is None:
        raise CommandError(EXIT_INPUT, "--data is required")
    try:
        return load_dataset(path, require_attributes=require_attributes)
    except InputError as exc:
        raise CommandError(code, str(exc)) from None


def _config(args):
    try:
        return load_config(args.config, seed=args.seed, method=getattr(args, "method", None))
    except InputError as exc:
        raise CommandError(EXIT_INPUT, str(exc)) from None


def _out_dir(args):
    if args.out is None:
        raise CommandError(EXIT_INPUT, "--out is required")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_validate(args):
    ds = _load(args.data)
    n_attr = 0 if ds.Y is None else ds.Y.shape[1]
    print(f"n={ds.n}, attributes={n_attr}, predictors={ds.n_predictors}")
    return EXIT_OK


def _train_model(method, ds: Dataset, cfg: RunConfig):
    ec = cfg.eval_config()
    if method == "gpr":
        model = gpr.train(gpr.TrainingSet.from_dataset(ds), ec.gpr)
        return model, {"jitter": model.metadata["jitter"],
                       "dropped_predictors": model.metadata["dropped_predictors"],
                       "system_dim": model.metadata["system_dim"]}
    if method == "knn":
        res = annealing.sa_select_predictors(ds.X, ds.Y, n_select=min(cfg.n_select, ds.n_predictors),
                                             k=cfg.k, schedule=cfg.sa, seed=cfg.seed)
        model = msn.knn_fit(ds.X, ds.Y, res.subset, k=cfg.k, weighted=cfg.weighted)
        return model, {"subset": [ds.predictor_names[j] for j in res.subset],
                       "sa_objective": res.objective, "ridge": model.projection.ridge}
    model = bayes.bayes_linear_fit(ds.X, ds.Y, ec.mcmc)
    return model, {"ridge": model.ridge}


def cmd_train(args):
    cfg = _config(args)
    if len(cfg.method) != 1:
        raise CommandError(EXIT_INPUT, "train takes exactly one --method")
    if args.model is None:
        raise CommandError(EXIT_INPUT, "--model is required")
    ds = _load(args.data)
    if ds.Y is None:
        raise CommandError(EXIT_INPUT, "training data need attribute columns")
    method = cfg.method[0]
    t0 = time.perf_counter()
    try:
        model, info = _train_model(method, ds, cfg)
    except InputError as exc:
        raise CommandError(EXIT_INPUT, str(exc)) from None
    except (ForestGPError, np.linalg.LinAlgError) as exc:
        raise CommandError(EXIT_TRAIN, f"training failed: {exc}") from None
    wall = time.perf_counter() - t0
    meta = {"method": method, "n_t": ds.n, "n_y": len(ds.attribute_names),
            "n_x": ds.n_predictors, "attribute_names": list(ds.attribute_names),
            "predictor_names": ds.predictor_names, "config_sha256": cfg.digest(),
            "seed": cfg.seed, **info}
    save_model(model, args.model, extra_meta={"run": meta})
    model_path = Path(args.model)
    Path(str(model_path) + ".json").write_text(
        json.dumps(meta, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    Path(str(model_path) + ".timing.json").write_text(
        json.dumps({"wall_time": wall}, indent=1) + "\n", encoding="utf-8")
    print(f"trained {method} on n={ds.n} plots in {wall:.2f} s", file=sys.stderr)
    return EXIT_OK


def _predict_rows(model, meta, ds, cfg):
    names = meta["run"]["attribute_names"]
    S = summation_vectors(names)
    kind = meta["kind"]
    rows = []
    if kind == "gpr":
        dists = gpr.predict_batch(model, ds.X, ds.plot_ids)
    for i, pid in enumerate(ds.plot_ids):
        if kind == "gpr":
            corr = correct_prediction(dists[i])
            tot = aggregate_totals(dists[i], point=corr.point, attribute_names=names)
            point, lo, hi = corr.point, corr.lower, corr.upper
            t_point, t_lo, t_hi = tot.point, tot.lower, tot.upper
        elif kind == "knn":
            point = msn.knn_predict(model, ds.X[i])
            lo = hi = np.full(len(names), np.nan)
            t_point, t_lo, t_hi = S @ point, np.full(3, np.nan), np.full(3, np.nan)
        else:
            res = bayes.bayes_linear_predict(model, ds.X[i], seed=cfg.seed ^ i, keep_samples=True)
            point, lo, hi = res.point, res.lower, res.upper
            tot = res.samples @ S.T
            t_point = tot.mean(axis=0)
            t_lo, t_hi = np.quantile(tot, [0.025, 0.975], axis=0)
        row = {"plot_id": pid}
        for j, a in enumerate(names):
            row[a], row[f"{a}_lower"], row[f"{a}_upper"] = point[j], lo[j], hi[j]
        for j, t in enumerate(TOTAL_NAMES):
            row[t], row[f"{t}_lower"], row[f"{t}_upper"] = t_point[j], t_lo[j], t_hi[j]
        rows.append(row)
    cols = ["plot_id"]
    for a in list(names) + list(TOTAL_NAMES):
        cols += [a, f"{a}_lower", f"{a}_upper"]
    return cols, rows


def cmd_predict(args):
    cfg = _config(args)
    if args.model is None or args.out is None:
        raise CommandError(EXIT_INPUT, "--model and --out are required")
    try:
        model, meta = load_model(args.model)
    except InputError as exc:
        raise CommandError(EXIT_INPUT, str(exc)) from None
    ds = _load(args.data, require_attributes=False)
    expected = meta["run"]["predictor_names"]
    if ds.predictor_names != expected:
        missing = sorted(set(expected) - set(ds.predictor_names))
        extra = sorted(set(ds.predictor_names) - set(expected))
        raise CommandError(EXIT_PREDICT, f"predictor columns do not match the model "
                                         f"(missing {missing[:5]}, unexpected {extra[:5]})")
    try:
        cols, rows = _predict_rows(model, meta, ds, cfg)
    except (ForestGPError, np.linalg.LinAlgError) as exc:
        raise CommandError(EXIT_PREDICT, f"prediction failed: {exc}") from None
    _write_table(args.out, _header(cfg, f"model={meta['kind']}"), cols, rows)
    return EXIT_OK


RECORD_COLUMNS = ["method", "n_t", "rep", "plot_id", "target", "point", "lower", "upper",
                  "observed", "corrected"]
METRIC_COLUMNS = ["method", "n_t", "group", "name", "rmse_pct", "bias_pct", "ci_pct", "n",
                  "n_failed"]


def _record_rows(records):
    for r in records:
        for j, t in enumerate(r.targets):
            yield {"method": r.method, "n_t": r.n_t, "rep": r.rep, "plot_id": r.plot_id,
                   "target": t, "point": r.point[j], "lower": r.lower[j], "upper": r.upper[j],
                   "observed": r.observed[j],
                   "corrected": None if r.corrected is None else bool(r.corrected[j])}


def _metric_rows(tables):
    for key, t in tables.items():
        method, n_t = key if isinstance(key, tuple) else (key, None)
        for row in t.rows:
            yield {"method": method, "n_t": n_t, "n_failed": t.n_failed, **row}


def _eval_guard(fn):
    try:
        return fn()
    except InputError as exc:
        raise CommandError(EXIT_INPUT, str(exc)) from None
    except (ForestGPError, np.linalg.LinAlgError) as exc:
        raise CommandError(EXIT_EVAL, f"evaluation failed: {exc}") from None


def _write_eval(out, cfg, result, summary=None):
    header = _header(cfg)
    (out / "config.ini").write_text(cfg.to_ini(), encoding="utf-8")
    _write_table(out / "records.csv", header, RECORD_COLUMNS, list(_record_rows(result.records)))
    _write_table(out / "metrics.csv", header, METRIC_COLUMNS, list(_metric_rows(result.tables)))
    if summary is not None:
        _write_table(out / "summary.csv", header, ["method", "n_t", "metric", "min", "mean", "max"],
                     summary)
    if result.failures:
        (out / "failures.txt").write_text("\n".join(result.failures) + "\n", encoding="utf-8")
    done = {k[0] if isinstance(k, tuple) else k for k in result.tables}
    lost = [m for m in cfg.method if m not in done]
    if lost:
        raise CommandError(EXIT_EVAL, f"every fold failed for {', '.join(lost)}; "
                                      f"see {out / 'failures.txt'}")


def cmd_loocv(args):
    cfg = _config(args)
    out = _out_dir(args)
    ds = _load(args.data)
    if ds.Y is None:
        raise CommandError(EXIT_INPUT, "loocv needs attribute columns")
    result = _eval_guard(lambda: loocv(ds, cfg.method, cfg.eval_config(), jobs=args.jobs,
                                       progress=_progress("loocv")))
    _write_eval(out, cfg, result)
    for m, t in result.tables.items():
        r = t.row("all")
        print(f"{m}: RMSE%={r['rmse_pct']:.2f} bias%={r['bias_pct']:.2f} "
              f"CI%={_fmt(r['ci_pct'])} failed={t.n_failed}", file=sys.stderr)
    return EXIT_OK


def cmd_size_experiment(args):
    try:
        cfg = load_config(args.config, seed=args.seed, method=args.method,
                          sizes=args.sizes, reps=args.reps)
    except InputError as exc:
        raise CommandError(EXIT_INPUT, str(exc)) from None
    if args.method is None and args.config is None:
        cfg = replace(cfg, method=("gpr", "knn"))
    out = _out_dir(args)
    ds = _load(args.data)
    if ds.Y is None:
        raise CommandError(EXIT_INPUT, "size-experiment needs attribute columns")
    result = _eval_guard(lambda: size_experiment(
        ds, cfg.sizes, cfg.reps, base_seed=cfg.seed, methods=cfg.method,
        config=cfg.eval_config(), jobs=args.jobs, progress=_progress("size-experiment")))
    _write_eval(out, cfg, result, size_summary(result.tables))
    return EXIT_OK


def cmd_synth(args):
    cfg = _config(args)
    if args.out is None:
        raise CommandError(EXIT_INPUT, "--out is required")
    try:
        ds = generate_synthetic(cfg.synth_config())
    except InputError as exc:
        raise CommandError(EXIT_INPUT, str(exc)) from None
    save_dataset(ds, args.out, header_comment=_header(cfg, "synthetic")[2:].rstrip("\n"))
    print(f"wrote n={ds.n} plots to {args.out}", file=sys.stderr)
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate, "train": cmd_train, "predict": cmd_predict,
    "loocv": cmd_loocv, "size-experiment": cmd_size_experiment, "synth": cmd_synth,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="forestgp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"forestgp {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--data")
        p.add_argument("--model")
        p.add_argument("--out")
        p.add_argument("--config")
        p.add_argument("--method", help="gpr, knn, bayes (comma separated where allowed)")
        p.add_argument("--seed", type=int)
        p.add_argument("--jobs", type=int, default=1)
        if name == "size-experiment":
            p.add_argument("--sizes", help="start:stop:step or comma separated list")
            p.add_argument("--reps", type=int)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
