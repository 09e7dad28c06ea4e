"""Run configuration: a flat ``dotted.key: value`` YAML document.

Nested mappings are accepted and flattened, so ``prior: {rho: 0.9}`` and
``prior.rho: 0.9`` are equivalent.  Every default is recorded in the
posterior artifact so a run describes itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .errors import ConfigError
from .model import PriorSpec
from .sampler import ChainConfig
from .simulate import SyntheticScenario

DEFAULTS = {
    "paths.reflectance": "reflectance.csv",
    "paths.sites": "sites.csv",
    "paths.labels": "labels.csv",
    "paths.cover_names": None,
    "paths.output": "output",
    "model.K": 3,
    "basis.L": 35,
    "basis.M": 70,
    "basis.reflectance_knots": "quantile",
    "basis.spatial_knots": "quantile",
    "covariates.intercept": True,
    "covariates.standardize": True,
    "covariates.columns": None,
    "fit.j_add": 20,
    "fit.j_add_rule": "random",
    "fit.j_add_ids": None,
    "fit.force": False,
    "predict.stride": 1,
    "predict.chunk_rows": 200_000,
    "run.seed": 2023,
    "run.threads": 1,
    "run.deterministic": False,
}
for _f in fields(PriorSpec):
    DEFAULTS[f"prior.{_f.name}"] = _f.default
for _f in fields(ChainConfig):
    if _f.name not in ("seed", "deterministic_reduction"):
        DEFAULTS[f"mcmc.{_f.name}"] = _f.default
for _f in fields(SyntheticScenario):
    if _f.name != "prior":
        DEFAULTS[f"simulate.{_f.name}"] = _f.default


def flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for key, value in d.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(flatten(value, name + "."))
        else:
            out[name] = value
    return out


def _coerce(key, value, default):
    if default is None or value is None:
        return value
    try:
        if isinstance(default, bool):
            if isinstance(value, str):
                return value.strip().lower() in ("1", "true", "yes", "on")
            return bool(value)
        if isinstance(default, int):
            if float(value) != int(float(value)):
                raise ValueError
            return int(float(value))
        if isinstance(default, float):
            return float(value)
        return type(default)(value)
    except (TypeError, ValueError):
        raise ConfigError(f"config key {key}: cannot interpret {value!r} as {type(default).__name__}") from None


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: dict(DEFAULTS))
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def load(cls, path=None, overrides: dict | None = None) -> "RunConfig":
        raw = {}
        base = Path.cwd()
        if path is not None:
            path = Path(path)
            if not path.exists():
                raise ConfigError(f"config file not found: {path}")
            with open(path, encoding="utf-8") as fh:
                loaded = yaml.safe_load(fh) or {}
            if not isinstance(loaded, dict):
                raise ConfigError(f"{path}: expected a mapping of keys to values")
            raw = flatten(loaded)
            base = path.parent.resolve()
        raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
        unknown = sorted(set(raw) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        values = dict(DEFAULTS)
        for key, value in raw.items():
            values[key] = _coerce(key, value, DEFAULTS[key])
        cfg = cls(values, base)
        cfg.validate()
        return cfg

    def __getitem__(self, key):
        return self.values[key]

    def path(self, key) -> Path:
        p = Path(self.values[key])
        return p if p.is_absolute() else self.base_dir / p

    def validate(self):
        v = self.values
        if v["model.K"] < 2:
            raise ConfigError("model.K must be >= 2")
        if v["basis.L"] < 1 or v["basis.M"] < 1:
            raise ConfigError("basis.L and basis.M must be >= 1")
        for key in ("basis.reflectance_knots", "basis.spatial_knots"):
            if v[key] not in ("regular", "quantile"):
                raise ConfigError(f"{key} must be 'regular' or 'quantile'")
        if v["fit.j_add"] < 0:
            raise ConfigError("fit.j_add must be >= 0")
        if v["fit.j_add_rule"] not in ("random", "list"):
            raise ConfigError("fit.j_add_rule must be 'random' or 'list'")
        if v["predict.stride"] < 1:
            raise ConfigError("predict.stride must be >= 1")
        self.prior()
        self.chain()
        return self

    def prior(self) -> PriorSpec:
        return PriorSpec(**{f.name: self.values[f"prior.{f.name}"] for f in fields(PriorSpec)})

    def chain(self) -> ChainConfig:
        kw = {f.name: self.values[f"mcmc.{f.name}"] for f in fields(ChainConfig)
              if f.name not in ("seed", "deterministic_reduction")}
        return ChainConfig(seed=self.values["run.seed"], deterministic_reduction=self.values["run.deterministic"], **kw)

    def scenario(self) -> SyntheticScenario:
        kw = {f.name: self.values[f"simulate.{f.name}"] for f in fields(SyntheticScenario) if f.name != "prior"}
        return SyntheticScenario(prior=self.prior(), **kw)

    def snapshot(self) -> dict:
        """Config values for the artifact; paths reduced to file names."""
        out = {}
        for key, value in sorted(self.values.items()):
            if key.startswith("paths.") and value is not None:
                value = Path(value).name
            out[key] = value
        return out

    def dump(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            yaml.safe_dump(self.values, fh, sort_keys=True)
