"""Run configuration stored as an INI file.

Every section and key is optional; missing values take the defaults below.
The canonical rendering (:meth:`RunConfig.to_ini`) is what gets hashed and
copied next to run outputs.
"""
from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field, replace

from .baselines.annealing import SaSchedule
from .baselines.bayes import McmcSettings
from .dataio import SynthConfig
from .errors import InputError
from .evaluation import DEFAULT_SIZES, METHODS, EvalConfig
from .gpr import GprConfig
from .kernel import KernelParams


def parse_sizes(text):
    """``"20:400:20"`` (inclusive range) or ``"20,40,60"``."""
    text = str(text).strip()
    try:
        if ":" in text:
            start, stop, step = (int(v) for v in text.split(":"))
            return tuple(range(start, stop + 1, step))
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise InputError(f"cannot parse sizes {text!r}") from None


def parse_methods(text):
    methods = tuple(m.strip() for m in str(text).split(",") if m.strip())
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise InputError(f"unknown method(s) {bad}; choose from {', '.join(METHODS)}")
    return methods


@dataclass(frozen=True)
class RunConfig:
    method: tuple = ("gpr",)
    seed: int = 0
    length_scale: float = 10.0
    error_scale: float = 0.1
    center: bool = True
    k: int = 5
    weighted: bool = False
    n_select: int = 10
    sa: SaSchedule = SaSchedule()
    n_iter: int = 50_000
    burn_in: int = 10_000
    target_accept: float = 0.3
    sizes: tuple = DEFAULT_SIZES
    reps: int = 2000
    synth: SynthConfig = field(default_factory=SynthConfig)

    def eval_config(self) -> EvalConfig:
        return EvalConfig(
            gpr=GprConfig(kernel=KernelParams(length_scale=self.length_scale),
                          error_scale=self.error_scale, center=self.center),
            k=self.k, weighted=self.weighted, n_select=self.n_select,
            sa_schedule=self.sa, sa_seed=self.seed,
            mcmc=McmcSettings(n_iter=self.n_iter, burn_in=self.burn_in,
                              target_accept=self.target_accept, seed=self.seed))

    def synth_config(self) -> SynthConfig:
        return replace(self.synth, seed=self.seed)

    def to_ini(self) -> str:
        s, z = self.sa, self.synth
        return "\n".join([
            "[run]",
            f"method = {','.join(self.method)}",
            f"seed = {self.seed}",
            "",
            "[gpr]",
            f"length_scale = {self.length_scale!r}",
            f"error_scale = {self.error_scale!r}",
            f"center = {str(self.center).lower()}",
            "",
            "[knn]",
            f"k = {self.k}",
            f"weighted = {str(self.weighted).lower()}",
            f"n_select = {self.n_select}",
            f"sa_cooling = {s.cooling!r}",
            f"sa_proposals = {s.proposals_per_temperature}",
            f"sa_max_temperatures = {s.max_temperatures}",
            f"sa_patience = {s.patience}",
            f"sa_calibration = {s.n_calibration}",
            "",
            "[bayes]",
            f"n_iter = {self.n_iter}",
            f"burn_in = {self.burn_in}",
            f"target_accept = {self.target_accept!r}",
            "",
            "[experiment]",
            f"sizes = {','.join(str(v) for v in self.sizes)}",
            f"reps = {self.reps}",
            "",
            "[synth]",
            f"n_plots = {z.n_plots}",
            f"n_predictors = {z.n_predictors}",
            f"noise_scale = {z.noise_scale!r}",
            f"zero_inflation = {','.join(repr(float(p)) for p in z.zero_inflation)}",
            f"n_latent = {z.n_latent}",
            f"smoothness = {z.smoothness!r}",
            f"mode = {z.mode}",
            "",
        ])

    def digest(self) -> str:
        return hashlib.sha256(self.to_ini().encode("utf-8")).hexdigest()


def load_config(path=None, **overrides) -> RunConfig:
    """Read an INI file (or just defaults) and apply non-None overrides."""
    cp = configparser.ConfigParser()
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                cp.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise InputError(f"cannot read config {path}: {exc}") from None
    d = RunConfig()

    def get(section, key, conv, default):
        if not cp.has_option(section, key):
            return default
        raw = cp.get(section, key)
        try:
            if conv is bool:
                return cp.getboolean(section, key)
            return conv(raw)
        except ValueError:
            raise InputError(f"bad value for [{section}] {key}: {raw!r}") from None

    try:
        sa = SaSchedule(
            cooling=get("knn", "sa_cooling", float, d.sa.cooling),
            proposals_per_temperature=get("knn", "sa_proposals", int,
                                          d.sa.proposals_per_temperature),
            max_temperatures=get("knn", "sa_max_temperatures", int, d.sa.max_temperatures),
            patience=get("knn", "sa_patience", int, d.sa.patience),
            n_calibration=get("knn", "sa_calibration", int, d.sa.n_calibration))
        synth = SynthConfig(
            n_plots=get("synth", "n_plots", int, d.synth.n_plots),
            n_predictors=get("synth", "n_predictors", int, d.synth.n_predictors),
            noise_scale=get("synth", "noise_scale", float, d.synth.noise_scale),
            zero_inflation=get("synth", "zero_inflation",
                               lambda v: tuple(float(p) for p in v.split(",")),
                               d.synth.zero_inflation),
            n_latent=get("synth", "n_latent", int, d.synth.n_latent),
            smoothness=get("synth", "smoothness", float, d.synth.smoothness),
            mode=get("synth", "mode", str, d.synth.mode))
        cfg = RunConfig(
            method=get("run", "method", parse_methods, d.method),
            seed=get("run", "seed", int, d.seed),
            length_scale=get("gpr", "length_scale", float, d.length_scale),
            error_scale=get("gpr", "error_scale", float, d.error_scale),
            center=get("gpr", "center", bool, d.center),
            k=get("knn", "k", int, d.k),
            weighted=get("knn", "weighted", bool, d.weighted),
            n_select=get("knn", "n_select", int, d.n_select),
            sa=sa,
            n_iter=get("bayes", "n_iter", int, d.n_iter),
            burn_in=get("bayes", "burn_in", int, d.burn_in),
            target_accept=get("bayes", "target_accept", float, d.target_accept),
            sizes=get("experiment", "sizes", parse_sizes, d.sizes),
            reps=get("experiment", "reps", int, d.reps),
            synth=synth)
    except InputError:
        raise
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid configuration: {exc}") from None
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if "method" in overrides and isinstance(overrides["method"], str):
        overrides["method"] = parse_methods(overrides["method"])
    if "sizes" in overrides and isinstance(overrides["sizes"], str):
        overrides["sizes"] = parse_sizes(overrides["sizes"])
    cfg = replace(cfg, **overrides)
    if cfg.burn_in >= cfg.n_iter:
        raise InputError("burn_in must be smaller than n_iter")
    if cfg.k < 1 or cfg.reps < 1:
        raise InputError("k and reps must be positive")
    return cfg
