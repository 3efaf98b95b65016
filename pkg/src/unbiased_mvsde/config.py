"""JSON experiment configuration: parsing and validation.

Every key is checked; unknown keys are rejected so that typos fail loudly
instead of silently running a default experiment.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .estimator import EstimatorConfig
from .models import BUILTINS, ConfigError, build_model

MODES = ("run", "mse", "kde", "diagnose", "cost")

_TOP_KEYS = {"mode", "model", "estimator", "phi", "M", "runs", "truth", "kde",
             "diagnose", "seed", "threads", "output"}
_ESTIMATOR_KEYS = {"l_star", "l_max", "p_max", "n_base", "pmf_form"}
_KDE_KEYS = {"components", "bandwidth", "grid"}
_GRID_KEYS = {"lo", "hi", "n"}
_DIAGNOSE_KEYS = {"level", "n", "horizon", "x0_a", "x0_b", "seeds"}
NAMED_FUNCTIONALS = {
    "sum_squares": lambda x: np.sum(x * x, axis=1),
    "norm": lambda x: np.sqrt(np.sum(x * x, axis=1)),
    "mean_components": lambda x: np.mean(x, axis=1),
}


def _check_keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be a JSON object")
    extra = set(obj) - allowed
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(extra)}")


def _int(value, name, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {value}")
    return value


def _float(value, name):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not np.isfinite(value):
        raise ConfigError(f"{name} must be a finite number, got {value!r}")
    return float(value)


@dataclass
class PhiSpec:
    kind: str = "moment"
    component: int = 0
    k: int = 1
    name: Optional[str] = None

    def function(self):
        if self.kind == "named":
            return NAMED_FUNCTIONALS[self.name]
        c, k = self.component, self.k
        return lambda x: x[:, c] ** k

    def describe(self):
        return self.name if self.kind == "named" else f"x[{self.component}]^{self.k}"


@dataclass
class KdeSpec:
    components: Optional[list] = None
    bandwidth: float = 0.1
    grid: Optional[dict] = None


@dataclass
class DiagnoseSpec:
    level: int = 3
    n: int = 50
    horizon: int = 20
    x0_a: float = -2.0
    x0_b: float = 2.0
    seeds: int = 1


@dataclass
class ExperimentConfig:
    model_name: str
    model_params: dict
    estimator: EstimatorConfig
    mode: Optional[str] = None
    phi: Optional[PhiSpec] = None
    M: list = field(default_factory=lambda: [1])
    runs: int = 2
    truth: Optional[object] = None
    kde: KdeSpec = field(default_factory=KdeSpec)
    diagnose: DiagnoseSpec = field(default_factory=DiagnoseSpec)
    seed: Optional[int] = None
    threads: int = 1
    output: Optional[str] = None

    def build_model(self):
        return build_model(self.model_name, self.model_params)


def _parse_model(obj, base_dir):
    _check_keys(obj, {"name", "params"}, "model")
    name = obj.get("name")
    if name not in BUILTINS:
        raise ConfigError(f"unknown model {name!r}; choose from {sorted(BUILTINS)}")
    params = dict(obj.get("params", {}))
    if not isinstance(obj.get("params", {}), dict):
        raise ConfigError("model.params must be a JSON object")
    if name == "mle_gaussian" and "y_file" in params:
        if "y" in params:
            raise ConfigError("give either y or y_file, not both")
        params["y"] = load_vector(Path(base_dir) / params.pop("y_file"))
    return name, params


def load_vector(path):
    """Observation vector from a JSON array or whitespace-separated text file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        try:
            data = np.loadtxt(path, ndmin=1)
        except ValueError as exc:
            raise ConfigError(f"cannot parse numbers in {path}: {exc}") from None
    return np.asarray(data, dtype=float).ravel().tolist()


def _parse_phi(obj, dim):
    if obj is None:
        return None
    _check_keys(obj, {"kind", "component", "k", "name"}, "phi")
    kind = obj.get("kind", "moment")
    if kind == "moment":
        comp = _int(obj.get("component", 0), "phi.component", 0)
        if comp >= dim:
            raise ConfigError(f"phi.component {comp} outside 0..{dim - 1}")
        return PhiSpec("moment", comp, _int(obj.get("k", 1), "phi.k", 1))
    if kind == "named":
        name = obj.get("name")
        if name not in NAMED_FUNCTIONALS:
            raise ConfigError(f"unknown named functional {name!r}; choose from {sorted(NAMED_FUNCTIONALS)}")
        return PhiSpec("named", name=name)
    raise ConfigError(f"phi.kind must be 'moment' or 'named', got {kind!r}")


def parse_config(obj, base_dir=".", mode=None):
    """Validate a decoded JSON object; returns an :class:`ExperimentConfig`."""
    _check_keys(obj, _TOP_KEYS, "config")
    cfg_mode = obj.get("mode")
    if cfg_mode is not None and cfg_mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {cfg_mode!r}")
    if mode is not None and cfg_mode is not None and cfg_mode != mode:
        raise ConfigError(f"config is for mode {cfg_mode!r} but command is {mode!r}")
    mode = mode or cfg_mode
    if "model" not in obj:
        raise ConfigError("config needs a 'model' object")
    name, params = _parse_model(obj["model"], base_dir)
    est = obj.get("estimator", {})
    _check_keys(est, _ESTIMATOR_KEYS, "estimator")
    estimator = EstimatorConfig(**est)
    cfg = ExperimentConfig(model_name=name, model_params=params, estimator=estimator, mode=mode)
    model = cfg.build_model()
    cfg.phi = _parse_phi(obj.get("phi"), model.dim)
    if mode in ("run", "mse") and cfg.phi is None:
        raise ConfigError(f"mode {mode!r} needs a 'phi' selector")

    M = obj.get("M", 1)
    Ms = M if isinstance(M, list) else [M]
    if not Ms:
        raise ConfigError("M must not be empty")
    cfg.M = [_int(m, "M", 1) for m in Ms]
    if mode != "mse" and len(cfg.M) > 1:
        raise ConfigError("a list of M values is only allowed in mse mode")
    cfg.runs = _int(obj.get("runs", 2), "runs", 2)
    truth = obj.get("truth")
    if mode == "mse":
        if truth is None:
            raise ConfigError("mse mode needs 'truth'")
        if truth != "curie_weiss_quadrature":
            truth = _float(truth, "truth")
        elif name != "curie_weiss":
            raise ConfigError("truth 'curie_weiss_quadrature' only applies to the curie_weiss model")
    cfg.truth = truth

    kde = obj.get("kde", {})
    _check_keys(kde, _KDE_KEYS, "kde")
    comps = kde.get("components")
    if comps is not None:
        if not isinstance(comps, list) or not comps:
            raise ConfigError("kde.components must be a non-empty list")
        comps = [_int(c, "kde.components[]", 0) for c in comps]
        if max(comps) >= model.dim:
            raise ConfigError(f"kde component outside 0..{model.dim - 1}")
    bw = _float(kde.get("bandwidth", 0.1), "kde.bandwidth")
    if bw <= 0:
        raise ConfigError("kde.bandwidth must be positive")
    grid = kde.get("grid")
    if grid is not None:
        _check_keys(grid, _GRID_KEYS, "kde.grid")
        lo, hi = _float(grid.get("lo"), "kde.grid.lo"), _float(grid.get("hi"), "kde.grid.hi")
        n = _int(grid.get("n", 801), "kde.grid.n", 2)
        if not lo < hi:
            raise ConfigError("kde.grid needs lo < hi")
        grid = {"lo": lo, "hi": hi, "n": n}
    cfg.kde = KdeSpec(comps, bw, grid)

    diag = obj.get("diagnose", {})
    _check_keys(diag, _DIAGNOSE_KEYS, "diagnose")
    spec = DiagnoseSpec()
    for key in ("level", "n", "horizon", "seeds"):
        if key in diag:
            setattr(spec, key, _int(diag[key], f"diagnose.{key}", 1 if key != "level" else 0))
    for key in ("x0_a", "x0_b"):
        if key in diag:
            setattr(spec, key, _float(diag[key], f"diagnose.{key}"))
    if mode == "diagnose" and model.dim != 1:
        raise ConfigError("diagnose mode supports one-dimensional models only")
    cfg.diagnose = spec

    if "seed" in obj:
        seed = _int(obj["seed"], "seed", 0)
        if seed >= 2 ** 64:
            raise ConfigError("seed must fit in 64 bits")
        cfg.seed = seed
    cfg.threads = _int(obj.get("threads", 1), "threads", 1)
    out = obj.get("output")
    if out is not None and not isinstance(out, str):
        raise ConfigError("output must be a path string")
    cfg.output = out
    return cfg


def load_config(path, mode=None):
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return parse_config(obj, base_dir=path.parent, mode=mode)
