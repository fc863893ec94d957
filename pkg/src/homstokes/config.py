"""Study configuration read from TOML files."""

import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .coefficients import FAMILIES, CoefficientError, build_coefficient
from .domain import RECIPES

EXTENSIONS = ("analytic", "reflection")
MAX_TOL = 1e-4


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class StudyConfig:
    family: str
    params: tuple = ()
    N: int = 128
    cell_tol: float = 1e-9
    epsilons: tuple = (0.25, 0.125, 0.0625, 0.03125)
    k: float = 8.0
    domain_tol: float = 1e-9
    recipe: str = "vortex"
    extension: str = "analytic"
    out_dir: Optional[str] = None
    cache_dir: Optional[str] = None
    jobs: int = 1
    sections: dict = field(default_factory=dict, repr=False)

    def grid_size(self, eps):
        return domain_resolution(self.k, eps)

    def coefficient(self):
        return build_coefficient(self.family, self.params)


def domain_resolution(k, eps):
    # guard against 8 / 0.125 landing a hair above an integer
    return int(math.ceil(k / eps - 1e-9))


def _is_pow2(n):
    return isinstance(n, int) and n > 0 and n & (n - 1) == 0


def _get(table, key, prefix, kind, default=None, required=False):
    name = f"{prefix}.{key}" if prefix else key
    if key not in table:
        if required:
            raise ConfigError(name, "missing required key")
        return default
    value = table[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is not None and not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise ConfigError(name, f"expected {getattr(kind, '__name__', kind)}, got {value!r}")
    return value


def _check_tol(value, name):
    if not 0 < value <= MAX_TOL:
        raise ConfigError(name, f"tolerance {value!r} outside (0, {MAX_TOL:g}]")


def validate(cfg):
    if cfg.family not in FAMILIES:
        raise ConfigError("coefficient.family", f"unknown family {cfg.family!r}")
    try:
        cfg.coefficient()
    except CoefficientError as exc:
        raise ConfigError("coefficient.params", str(exc)) from exc
    if not _is_pow2(cfg.N) or cfg.N < 32:
        raise ConfigError("cell.N", f"must be a power of two >= 32, got {cfg.N!r}")
    _check_tol(cfg.cell_tol, "cell.tol")
    _check_tol(cfg.domain_tol, "study.tol")
    eps = cfg.epsilons
    if len(eps) == 0:
        raise ConfigError("study.epsilons", "empty list")
    for e in eps:
        if not 0 < e <= 0.5:
            raise ConfigError("study.epsilons", f"value {e!r} outside (0, 1/2]")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ConfigError("study.epsilons", "values must be strictly decreasing")
    if not cfg.k > 0:
        raise ConfigError("study.k", "must be positive")
    for e in eps:
        M = cfg.grid_size(e)
        if not _is_pow2(M) or M < 32:
            raise ConfigError("study.k", f"M = ceil(k/eps) = {M} for eps = {e!r} is not a power of two >= 32")
    if cfg.recipe not in RECIPES:
        raise ConfigError("study.recipe", f"expected one of {RECIPES}")
    if cfg.extension not in EXTENSIONS:
        raise ConfigError("study.extension", f"expected one of {EXTENSIONS}")
    if not isinstance(cfg.jobs, int) or cfg.jobs < 1:
        raise ConfigError("run.jobs", "must be a positive integer")
    return cfg


def config_from_dict(data):
    coef = _get(data, "coefficient", "", dict, required=True)
    cell = _get(data, "cell", "", dict, {})
    study = _get(data, "study", "", dict, {})
    run = _get(data, "run", "", dict, {})
    params = _get(coef, "params", "coefficient", list, [])
    for p in params:
        if isinstance(p, bool) or not isinstance(p, (int, float)):
            raise ConfigError("coefficient.params", f"non-numeric entry {p!r}")
    eps = _get(study, "epsilons", "study", list, list(StudyConfig.epsilons))
    for e in eps:
        if isinstance(e, bool) or not isinstance(e, (int, float)):
            raise ConfigError("study.epsilons", f"non-numeric entry {e!r}")
    cfg = StudyConfig(
        family=_get(coef, "family", "coefficient", str, required=True),
        params=tuple(float(p) for p in params),
        N=_get(cell, "N", "cell", int, StudyConfig.N),
        cell_tol=_get(cell, "tol", "cell", float, StudyConfig.cell_tol),
        epsilons=tuple(float(e) for e in eps),
        k=_get(study, "k", "study", float, StudyConfig.k),
        domain_tol=_get(study, "tol", "study", float, StudyConfig.domain_tol),
        recipe=_get(study, "recipe", "study", str, StudyConfig.recipe),
        extension=_get(study, "extension", "study", str, StudyConfig.extension),
        out_dir=_get(run, "out", "run", str, None),
        cache_dir=_get(run, "cache", "run", str, None),
        jobs=_get(run, "jobs", "run", int, 1),
        sections={k: v for k, v in data.items() if k not in ("coefficient", "cell", "study", "run")},
    )
    return validate(cfg)


def parse_config(path):
    """Read and validate a TOML study file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from exc
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("config", f"malformed TOML: {exc}") from exc
    return config_from_dict(data)


def resolve_cache_dir(cli_value, cfg):
    """--cache beats the config file, which beats HS_CACHE_DIR."""
    return cli_value or cfg.cache_dir or os.environ.get("HS_CACHE_DIR")
