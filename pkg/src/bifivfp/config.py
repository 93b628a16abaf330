"""Run configuration: YAML file with sections, validated into dataclasses.

Example (every key optional; values shown are the defaults)::

    model: {epsilon: 1.0, kappa: 1.0, theta_bar: 1.0, n_species: 2, delta: 0.01, dim: 1}
    grid: {dim: 1, n_x: 64, n_v: 32, x_extent: 1.0, v_extent: 8.0}
    lofi: {kind: coarse, factor: 4}
    kl: {ell: 0.08, sigma: 0.1, fraction: 0.95, periodic: true}
    initial: {profile: volcano, amplitude: null}
    sampling: {seed: 0, distribution: normal, M: 200, K: 10, K_list: null, M_eval: 100}
    run: {t_final: 0.1, cfl: 0.5, n_checkpoints: 20, energy_samples: 1,
          projection: per_component, workers: 1, out: runs/default,
          timings: true, max_failure_fraction: 0.01}
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .errors import ConfigError
from .grid import Grid, ModelParams
from .lofi import LoFiKind
from .simulate import Problem, make_problem


@dataclass(frozen=True)
class KLConfig:
    ell: float = 0.08
    sigma: float = 0.1
    fraction: float = 0.95
    periodic: bool = True


@dataclass(frozen=True)
class InitialConfig:
    profile: str = "volcano"
    amplitude: float | None = None


@dataclass(frozen=True)
class SamplingConfig:
    seed: int = 0
    distribution: str = "normal"
    M: int = 200
    K: int = 10
    K_list: tuple | None = None
    M_eval: int = 100

    @property
    def k_values(self) -> tuple:
        return tuple(self.K_list) if self.K_list else (self.K,)


@dataclass(frozen=True)
class RunSettings:
    t_final: float = 0.1
    cfl: float = 0.5
    n_checkpoints: int = 20
    energy_samples: int = 1
    projection: str = "per_component"
    workers: int = 1
    out: str = "runs/default"
    timings: bool = True
    max_failure_fraction: float = 0.01


SECTIONS = {
    "model": ModelParams,
    "grid": Grid,
    "lofi": LoFiKind,
    "kl": KLConfig,
    "initial": InitialConfig,
    "sampling": SamplingConfig,
    "run": RunSettings,
}

# keys that do not change any computed number
NON_SEMANTIC = {("run", "workers"), ("run", "out")}


def _coerce(typ, key: str, value):
    """Cast to the type of the field default; YAML reads ``1e-5`` as a string."""
    default = {f.name: f.default for f in fields(typ)}[key]
    try:
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise ValueError
            return value
        if isinstance(default, float) or (key == "amplitude" and value is not None):
            return float(value)
        if isinstance(default, int):
            if float(value) != int(float(value)):
                raise ValueError
            return int(float(value))
    except (TypeError, ValueError):
        raise ConfigError(f"{typ.__name__}.{key}: cannot use {value!r}") from None
    return value


@dataclass(frozen=True)
class RunConfig:
    model: ModelParams = field(default_factory=ModelParams)
    grid: Grid = field(default_factory=Grid)
    lofi: LoFiKind = field(default_factory=LoFiKind)
    kl: KLConfig = field(default_factory=KLConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    run: RunSettings = field(default_factory=RunSettings)

    def __post_init__(self):
        s, r = self.sampling, self.run
        if self.model.dim != self.grid.dim:
            raise ConfigError(f"model.dim={self.model.dim} but grid.dim={self.grid.dim}")
        if not 1 <= s.K <= s.M:
            raise ConfigError(f"need 1 <= K <= M, got K={s.K}, M={s.M}")
        if any(not 1 <= k <= s.K for k in s.k_values):
            raise ConfigError(f"every entry of K_list must lie in [1, K={s.K}], got {s.K_list}")
        if s.M_eval < 1:
            raise ConfigError("M_eval must be positive")
        if s.distribution not in ("normal", "uniform"):
            raise ConfigError(f"unknown distribution {s.distribution!r}")
        if self.grid.n_x % self.lofi.factor:
            raise ConfigError(f"coarsening factor {self.lofi.factor} does not divide n_x={self.grid.n_x}")
        if not r.t_final > 0:
            raise ConfigError("t_final must be positive")
        if not 0 < r.cfl <= 1:
            raise ConfigError("cfl must lie in (0, 1]")
        if r.workers < 1:
            raise ConfigError("workers must be >= 1")
        if r.projection not in ("per_component", "concatenated"):
            raise ConfigError(f"unknown projection mode {r.projection!r}")
        if self.initial.profile not in ("volcano", "near_equilibrium", "equilibrium"):
            raise ConfigError(f"unknown initial profile {self.initial.profile!r}")

    # -- construction --------------------------------------------------

    @classmethod
    def from_dict(cls, d: dict | None) -> "RunConfig":
        d = dict(d or {})
        unknown = set(d) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        kwargs = {}
        for name, typ in SECTIONS.items():
            sec = d.get(name) or {}
            if not isinstance(sec, dict):
                raise ConfigError(f"section {name!r} must be a mapping")
            allowed = {f.name for f in fields(typ)}
            bad = set(sec) - allowed
            if bad:
                raise ConfigError(f"unknown keys in {name!r}: {sorted(bad)}")
            if name == "sampling" and sec.get("K_list") is not None:
                sec = dict(sec, K_list=tuple(int(k) for k in sec["K_list"]))
            sec = {k: _coerce(typ, k, v) for k, v in sec.items()}
            try:
                kwargs[name] = typ(**sec)
            except TypeError as exc:
                raise ConfigError(f"section {name!r}: {exc}") from None
        # the grid dimension follows the model unless given explicitly
        if "dim" not in (d.get("grid") or {}):
            kwargs["grid"] = replace(kwargs["grid"], dim=kwargs["model"].dim)
        return cls(**kwargs)

    def to_dict(self) -> dict:
        out = {}
        for name in SECTIONS:
            sec = asdict(getattr(self, name))
            if name == "sampling" and sec["K_list"] is not None:
                sec["K_list"] = list(sec["K_list"])
            out[name] = sec
        return out

    def override(self, **changes) -> "RunConfig":
        """Return a copy with ``section__key=value`` overrides applied."""
        d = self.to_dict()
        for key, value in changes.items():
            sec, _, name = key.partition("__")
            d[sec][name] = value
        return RunConfig.from_dict(d)

    def hash(self) -> str:
        d = self.to_dict()
        for sec, key in NON_SEMANTIC:
            d[sec].pop(key, None)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    # -- derived objects ---------------------------------------------------

    @property
    def out(self) -> Path:
        return Path(self.run.out)

    def problem(self) -> Problem:
        return make_problem(
            self.model,
            self.grid,
            profile=self.initial.profile,
            ell=self.kl.ell,
            sigma=self.kl.sigma,
            fraction=self.kl.fraction,
            periodic=self.kl.periodic,
            amplitude=self.initial.amplitude,
            t_final=self.run.t_final,
            cfl=self.run.cfl,
        )


def load_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        data = yaml.safe_load(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return RunConfig.from_dict(data)
