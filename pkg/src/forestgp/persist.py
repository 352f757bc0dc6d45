"""Versioned model files.

A model file is a zip archive holding ``meta.json`` and one ``.npy`` member
per array.  Member timestamps are fixed, so saving the same model twice
yields byte-identical files, and arrays round-trip bit for bit.
"""
from __future__ import annotations

import io
import json
import zipfile
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .baselines.bayes import BayesLinearModel, McmcSettings
from .baselines.msn import KnnModel, MsnProjection
from .dataio import StandardizationStats
from .errors import InputError
from .gpr import KroneckerSystem, TrainedGprModel
from .kernel import KernelParams

FORMAT_VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


def _write(path, meta, arrays):
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        info = zipfile.ZipInfo("meta.json", date_time=_EPOCH)
        info.compress_type = zipfile.ZIP_DEFLATED
        zf.writestr(info, json.dumps(meta, sort_keys=True, indent=1))
        for name in sorted(arrays):
            arr = io.BytesIO()
            np.lib.format.write_array(arr, np.asarray(arrays[name]),
                                      allow_pickle=False)
            info = zipfile.ZipInfo(f"{name}.npy", date_time=_EPOCH)
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, arr.getvalue())
    Path(path).write_bytes(buf.getvalue())


def _read(path):
    try:
        zf = zipfile.ZipFile(path)
    except (OSError, zipfile.BadZipFile) as exc:
        raise InputError(f"cannot read model file {path}: {exc}") from None
    with zf:
        meta = json.loads(zf.read("meta.json"))
        arrays = {}
        for name in zf.namelist():
            if name.endswith(".npy"):
                arrays[name[:-4]] = np.lib.format.read_array(io.BytesIO(zf.read(name)),
                                                             allow_pickle=False)
    if meta.get("format_version") != FORMAT_VERSION:
        raise InputError(f"unsupported model format {meta.get('format_version')!r}")
    return meta, arrays


def _stats_arrays(prefix, st):
    return {f"{prefix}_mean": st.mean, f"{prefix}_sd": st.sd, f"{prefix}_constant": st.constant}


def _stats_from(prefix, a):
    return StandardizationStats(a[f"{prefix}_mean"], a[f"{prefix}_sd"], a[f"{prefix}_constant"])


def save_model(model, path, extra_meta=None):
    meta = {"format_version": FORMAT_VERSION, "package_version": __version__}
    meta.update(extra_meta or {})
    if isinstance(model, TrainedGprModel):
        s = model.system
        meta.update(kind="gpr", error_scale=model.error_scale, center=model.center,
                    kernel=asdict(model.kernel), attribute_names=model.attribute_names,
                    predictor_names=model.predictor_names, metadata=model.metadata)
        arrays = {"kept": model.kept, "X_t": model.X_t, "attribute_means": model.attribute_means,
                  "gamma_y": model.gamma_y, "D": model.D,
                  "centered_targets": model.centered_targets, "weights": model.weights,
                  "W": s.W, "W_inv": s.W_inv, "s": s.s, "V": s.V, "lam": s.lam,
                  **_stats_arrays("x", model.stats)}
    elif isinstance(model, KnnModel):
        p = model.projection
        meta.update(kind="knn", k=model.k, weighted=model.weighted, ridge=p.ridge)
        arrays = {"subset": p.subset, "coef": p.coef, "canon_corr": p.canon_corr,
                  "Z_train": model.Z_train, "Y_train": model.Y_train,
                  **_stats_arrays("x", p.x_stats)}
    elif isinstance(model, BayesLinearModel):
        meta.update(kind="bayes", basis=model.basis, ridge=model.ridge,
                    settings=asdict(model.settings))
        arrays = {"A": model.A, "resid_mean": model.resid_mean, "resid_cov": model.resid_cov,
                  "prior_mean": model.prior_mean, "prior_cov": model.prior_cov,
                  "kept": model.kept, **_stats_arrays("x", model.stats)}
    else:
        raise InputError(f"cannot save object of type {type(model).__name__}")
    _write(path, meta, arrays)


def load_model(path):
    """Return ``(model, meta)``."""
    meta, a = _read(path)
    kind = meta.get("kind")
    if kind == "gpr":
        system = KroneckerSystem(W=a["W"], W_inv=a["W_inv"], s=a["s"], V=a["V"], lam=a["lam"],
                                 error_scale=meta["error_scale"])
        model = TrainedGprModel(
            stats=_stats_from("x", a), kept=a["kept"], X_t=a["X_t"],
            attribute_means=a["attribute_means"], gamma_y=a["gamma_y"], D=a["D"],
            error_scale=meta["error_scale"], kernel=KernelParams(**meta["kernel"]),
            center=meta["center"], system=system, centered_targets=a["centered_targets"],
            weights=a["weights"], attribute_names=meta["attribute_names"],
            predictor_names=meta["predictor_names"], metadata=meta["metadata"])
    elif kind == "knn":
        proj = MsnProjection(subset=a["subset"], x_stats=_stats_from("x", a), coef=a["coef"],
                             canon_corr=a["canon_corr"], ridge=meta["ridge"])
        model = KnnModel(projection=proj, Z_train=a["Z_train"], Y_train=a["Y_train"],
                         k=meta["k"], weighted=meta["weighted"])
    elif kind == "bayes":
        model = BayesLinearModel(
            A=a["A"], resid_mean=a["resid_mean"], resid_cov=a["resid_cov"],
            prior_mean=a["prior_mean"], prior_cov=a["prior_cov"], stats=_stats_from("x", a),
            kept=a["kept"], settings=McmcSettings(**meta["settings"]), basis=meta["basis"],
            ridge=meta["ridge"])
    else:
        raise InputError(f"unknown model kind {kind!r}")
    return model, meta
