"""Dataset schema, CSV reading/writing, standardization and synthetic data.

Canonical CSV layout::

    plot_id, pine_hgm, pine_dgm, pine_n, pine_ba, pine_v,
             spruce_hgm, ..., decid_v, x001, ..., xNNN

Attribute units are m (hgm), cm (dgm), stems/ha (n), m^2/ha (ba) and
m^3/ha (v).  Predictor columns are opaque numbers; every column that is
neither ``plot_id`` nor an attribute is treated as a predictor.  Lines
starting with ``#`` are comments.
"""
from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import DatasetError, InputError

SPECIES = ("pine", "spruce", "decid")
QUANTITIES = ("hgm", "dgm", "n", "ba", "v")
UNITS = {"hgm": "m", "dgm": "cm", "n": "stems/ha", "ba": "m2/ha", "v": "m3/ha"}
ATTRIBUTE_NAMES = tuple(f"{s}_{q}" for s in SPECIES for q in QUANTITIES)
N_ATTRIBUTES = len(ATTRIBUTE_NAMES)
# quantities that sum to a meaningful stand total
TOTAL_QUANTITIES = ("n", "ba", "v")


def predictor_names(n):
    return [f"x{j + 1:03d}" for j in range(n)]


def _natural_key(name):
    return [int(t) if t.isdigit() else t for t in re.split(r"(\d+)", name)]


@dataclass
class Dataset:
    plot_ids: list
    X: np.ndarray
    Y: np.ndarray | None
    predictor_names: list
    attribute_names: tuple = ATTRIBUTE_NAMES
    units: dict = field(default_factory=lambda: {
        a: UNITS[a.split("_", 1)[1]] for a in ATTRIBUTE_NAMES})

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.Y is not None:
            self.Y = np.asarray(self.Y, dtype=float)
        self.plot_ids = [str(p) for p in self.plot_ids]
        self.predictor_names = list(self.predictor_names)
        validate(self)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def n_predictors(self):
        return self.X.shape[1]

    def subset(self, index):
        index = np.asarray(index, dtype=int)
        return Dataset(
            plot_ids=[self.plot_ids[i] for i in index],
            X=self.X[index],
            Y=None if self.Y is None else self.Y[index],
            predictor_names=self.predictor_names,
            attribute_names=self.attribute_names,
            units=dict(self.units),
        )


def validate(ds: Dataset):
    """Raise :class:`DatasetError` for the first invariant violation found."""
    if ds.X.ndim != 2:
        raise DatasetError("predictor matrix must be 2-D")
    n = ds.X.shape[0]
    if len(ds.plot_ids) != n:
        raise DatasetError("plot_ids length does not match number of rows")
    if ds.X.shape[1] != len(ds.predictor_names):
        raise DatasetError("predictor names do not match predictor columns")
    seen = {}
    for i, pid in enumerate(ds.plot_ids):
        if pid in seen:
            raise DatasetError(
                f"duplicate plot_id {pid!r} (first at row {seen[pid]})",
                row=i + 1, column="plot_id")
        seen[pid] = i + 1
    bad = np.argwhere(~np.isfinite(ds.X))
    if bad.size:
        i, j = bad[0]
        raise DatasetError("non-finite predictor value", row=int(i) + 1,
                           column=ds.predictor_names[j])
    if ds.Y is not None:
        if ds.Y.shape != (n, len(ds.attribute_names)):
            raise DatasetError(f"attribute matrix has shape {ds.Y.shape}")
        bad = np.argwhere(~np.isfinite(ds.Y))
        if bad.size:
            i, j = bad[0]
            raise DatasetError("non-finite attribute value", row=int(i) + 1,
                               column=ds.attribute_names[j])
        bad = np.argwhere(ds.Y < 0)
        if bad.size:
            i, j = bad[0]
            raise DatasetError("negative attribute value", row=int(i) + 1,
                               column=ds.attribute_names[j])


def _parse_float(text, row, column):
    try:
        value = float(text)
    except ValueError:
        raise DatasetError(f"non-numeric value {text!r}", row=row, column=column) from None
    if not math.isfinite(value):
        raise DatasetError(f"non-finite value {text!r}", row=row, column=column)
    return value


def load_dataset(path, require_attributes=True) -> Dataset:
    """Read a canonical CSV file.

    Columns are matched by name, so their order in the file is irrelevant.
    With ``require_attributes=False`` a file holding only ``plot_id`` and
    predictors is accepted (``Y`` is then ``None``); a file carrying some
    but not all attribute columns is always rejected.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from None
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise DatasetError(f"{path} is empty")
    reader = csv.reader(lines)
    header = [h.strip() for h in next(reader)]
    if len(set(header)) != len(header):
        dup = next(h for h in header if header.count(h) > 1)
        raise DatasetError("duplicate column", column=dup)
    if "plot_id" not in header:
        raise DatasetError("missing column", column="plot_id")
    present = [a for a in ATTRIBUTE_NAMES if a in header]
    if present or require_attributes:
        for a in ATTRIBUTE_NAMES:
            if a not in header:
                raise DatasetError("missing column", column=a)
    has_y = bool(present)
    pred_cols = sorted((h for h in header if h != "plot_id" and h not in ATTRIBUTE_NAMES),
                       key=_natural_key)
    if not pred_cols:
        raise DatasetError("no predictor columns")
    col = {h: k for k, h in enumerate(header)}

    ids, X, Y = [], [], []
    for r, fields in enumerate(reader, start=1):
        if len(fields) != len(header):
            raise DatasetError(
                f"expected {len(header)} fields, found {len(fields)}", row=r)
        ids.append(fields[col["plot_id"]].strip())
        X.append([_parse_float(fields[col[h]], r, h) for h in pred_cols])
        if has_y:
            y = [_parse_float(fields[col[a]], r, a) for a in ATTRIBUTE_NAMES]
            for a, v in zip(ATTRIBUTE_NAMES, y):
                if v < 0:
                    raise DatasetError("negative attribute value", row=r, column=a)
            Y.append(y)
    if not ids:
        raise DatasetError(f"{path} has a header but no data rows")
    return Dataset(plot_ids=ids, X=np.array(X), Y=np.array(Y) if has_y else None,
                   predictor_names=pred_cols)


def format_float(v) -> str:
    """Shortest decimal string that round-trips to the same double."""
    return repr(float(v))


def dataset_to_csv(ds: Dataset, header_comment=None) -> str:
    buf = io.StringIO()
    if header_comment:
        for line in header_comment.splitlines():
            buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    cols = ["plot_id"]
    if ds.Y is not None:
        cols += list(ds.attribute_names)
    w.writerow(cols + list(ds.predictor_names))
    for i, pid in enumerate(ds.plot_ids):
        row = [pid]
        if ds.Y is not None:
            row += [format_float(v) for v in ds.Y[i]]
        row += [format_float(v) for v in ds.X[i]]
        w.writerow(row)
    return buf.getvalue()


def save_dataset(ds: Dataset, path, header_comment=None):
    Path(path).write_text(dataset_to_csv(ds, header_comment), encoding="utf-8")


@dataclass(frozen=True)
class StandardizationStats:
    mean: np.ndarray
    sd: np.ndarray
    # True where the training column had zero variance
    constant: np.ndarray


def standardize(X, stats: StandardizationStats | None = None):
    """Column-wise z-scores.

    Without ``stats`` they are computed from ``X`` (sample sd, ddof=1).
    Zero-variance columns map to 0 and are flagged in ``stats.constant``.
    Returns ``(Z, stats)``.
    """
    X = np.asarray(X, dtype=float)
    if stats is None:
        mean = X.mean(axis=0)
        sd = X.std(axis=0, ddof=1) if X.shape[0] > 1 else np.zeros(X.shape[1])
        constant = ~(sd > 1e-12 * np.maximum(1.0, np.abs(mean)))
        sd = np.where(constant, 1.0, sd)
        stats = StandardizationStats(mean=mean, sd=sd, constant=constant)
    elif X.shape[-1] != stats.mean.shape[0]:
        raise InputError(
            f"expected {stats.mean.shape[0]} predictors, got {X.shape[-1]}")
    Z = (X - stats.mean) / stats.sd
    Z = np.where(stats.constant, 0.0, Z)
    return Z, stats


# --------------------------------------------------------------------------
# synthetic data
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    n_plots: int = 493
    n_predictors: int = 77
    seed: int = 0
    noise_scale: float = 0.1
    # probability that a species is absent from a plot (whole block zero)
    zero_inflation: tuple = (0.05, 0.15, 0.30)
    n_latent: int = 6
    # larger values make predictors smoother functions of the latent state
    smoothness: float = 1.0
    mode: str = "nonlinear"

    def __post_init__(self):
        if self.n_plots < 2:
            raise InputError("n_plots must be at least 2")
        if self.n_predictors < 1:
            raise InputError("n_predictors must be at least 1")
        if len(self.zero_inflation) != len(SPECIES):
            raise InputError("zero_inflation needs one probability per species")
        if any(not 0.0 <= p <= 1.0 for p in self.zero_inflation):
            raise InputError("zero_inflation probabilities must lie in [0, 1]")
        if self.mode not in ("nonlinear", "copula"):
            raise InputError(f"unknown synthetic mode {self.mode!r}")
        if self.noise_scale < 0 or self.smoothness <= 0 or self.n_latent < 1:
            raise InputError("noise_scale >= 0, smoothness > 0, n_latent >= 1 required")


def _predictors(z, cfg, rng):
    """Smooth nonlinear features of the latent state plus noise."""
    n, q = z.shape
    W = rng.normal(size=(q, cfg.n_predictors)) / (np.sqrt(q) * cfg.smoothness)
    b = rng.normal(size=cfg.n_predictors)
    kind = rng.integers(0, 3, size=cfg.n_predictors)
    h = z @ W + b
    F = np.where(kind == 0, np.tanh(h), np.where(kind == 1, np.sin(h), h + 0.25 * h ** 2))
    scale = np.exp(rng.normal(0.0, 1.0, size=cfg.n_predictors))
    offset = rng.normal(0.0, 5.0, size=cfg.n_predictors)
    noise = cfg.noise_scale * rng.normal(size=F.shape)
    return offset + scale * (F + noise)


def _species_surface(z, cfg, rng):
    """Stand attributes as a nonlinear function of the latent plot state.

    Maturity drives height and diameter, density drives stem number, and a
    softmax over species scores splits the basal area between species.
    """
    n, q = z.shape
    noise = cfg.noise_scale
    maturity = z[:, 0] + 0.3 * z[:, 1] * z[:, 2]
    density = z[:, 1] - 0.2 * z[:, 0] ** 2
    if q >= 6:
        scores = z[:, 3:6] + 0.5 * np.tanh(z[:, [0, 0, 1]] * z[:, [1, 2, 2]])
    else:
        scores = np.stack([z[:, j % q] * s for j, s in enumerate((1.0, -1.0, 0.5))], axis=1)
    scores = scores + np.array([0.6, 0.2, -0.6])
    share = np.exp(scores)
    share /= share.sum(axis=1, keepdims=True)
    total_ba = 22.0 / (1.0 + np.exp(-(1.2 * maturity + 0.8 * density))) + 2.0
    cols = []
    for k in range(len(SPECIES)):
        eps = noise * rng.normal(size=(n, 4))
        hgm = 4.0 + 20.0 / (1.0 + np.exp(-(maturity + 0.3 * k - 0.2 + eps[:, 0])))
        dgm = hgm * (1.1 + 0.15 * np.tanh(z[:, 2] + eps[:, 1])) + 1.0
        ba = total_ba * share[:, k] * np.exp(eps[:, 2])
        # N follows from BA and the mean diameter (BA = N * pi * (D/200)^2)
        n_stems = ba / (np.pi * (dgm / 200.0) ** 2) * np.exp(0.5 * eps[:, 3])
        v = ba * hgm * (0.42 + 0.04 * np.tanh(z[:, 0]))
        cols += [hgm, dgm, n_stems, ba, v]
    return np.column_stack(cols)


def _copula(z, cfg, rng):
    """Gaussian copula over a correlated latent response with gamma marginals."""
    n, q = z.shape
    B = rng.normal(size=(q, N_ATTRIBUTES)) / np.sqrt(q)
    L = np.linalg.cholesky(0.5 * np.eye(N_ATTRIBUTES) + 0.5 * np.ones((N_ATTRIBUTES,) * 2))
    r = z @ B + cfg.noise_scale * rng.normal(size=(n, N_ATTRIBUTES)) @ L.T
    r = (r - r.mean(axis=0)) / r.std(axis=0)
    u = np.clip(stats.norm.cdf(r), 1e-12, 1 - 1e-12)
    typical = {"hgm": 15.0, "dgm": 18.0, "n": 900.0, "ba": 8.0, "v": 60.0}
    shape = {"hgm": 12.0, "dgm": 10.0, "n": 3.0, "ba": 2.5, "v": 2.0}
    cols = []
    for j, name in enumerate(ATTRIBUTE_NAMES):
        qty = name.split("_", 1)[1]
        cols.append(stats.gamma.ppf(u[:, j], shape[qty], scale=typical[qty] / shape[qty]))
    return np.column_stack(cols)


def generate_synthetic(cfg: SynthConfig = SynthConfig()) -> Dataset:
    """Seeded synthetic dataset in the canonical schema.

    ``mode="nonlinear"`` derives attributes from a forest-like nonlinear
    response surface; ``mode="copula"`` draws them through a Gaussian copula.
    Each species block is zeroed independently with its ``zero_inflation``
    probability.
    """
    rng = np.random.default_rng(cfg.seed)
    z = rng.normal(size=(cfg.n_plots, cfg.n_latent))
    Y = _species_surface(z, cfg, rng) if cfg.mode == "nonlinear" else _copula(z, cfg, rng)
    Y = np.maximum(Y, 0.0)
    absent = rng.random(size=(cfg.n_plots, len(SPECIES))) < np.asarray(cfg.zero_inflation)
    Y = Y * np.repeat(~absent, len(QUANTITIES), axis=1)
    # predictors see the realized species mix, as spectral metrics would
    ba = Y[:, [k * len(QUANTITIES) + QUANTITIES.index("ba") for k in range(len(SPECIES))]]
    share = ba / np.maximum(ba.sum(axis=1, keepdims=True), 1e-12)
    X = _predictors(np.hstack([z, 3.0 * share - 1.0]), cfg, rng)
    ids = [f"p{i + 1:04d}" for i in range(cfg.n_plots)]
    return Dataset(plot_ids=ids, X=X, Y=Y, predictor_names=predictor_names(cfg.n_predictors))
