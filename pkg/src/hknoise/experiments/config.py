"""Experiment configuration: a TOML file with nested sections.

Example::

    name = "fig1"
    variant = "EnvNoise"
    horizon = 1000000
    replicates = 1
    seed = 1
    alpha = 0.01

    [population]
    n = 20
    omega = 0.5
    r = { kind = "uniform", lo = 0.05, hi = 0.45, seed = 2024 }

    [noise]
    eta = 0.025
    kind = "uniform"

    [x0]
    kind = "constant"
    value = 0.5

    [outputs]
    dir = "out/fig1"
    jsonl = true
    svg = true

A reach task uses the same file with an extra ``[reach]`` section.
"""
from __future__ import annotations

import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .. import rng
from ..core import ModelVariant, Population
from ..errors import ConfigError, HKError
from ..noise import NoiseKind, NoiseModel

SEED_ENV_VAR = "HKNOISE_SEED"
DEFAULT_HORIZON = 1_000_000


def _drop_none(d):
    if isinstance(d, dict):
        return {k: _drop_none(v) for k, v in d.items() if v is not None}
    return d


def _take(cls, data: dict, section: str):
    if not isinstance(data, dict):
        raise ConfigError(f"[{section}] must be a table")
    known = {f.name for f in fields(cls)}
    extra = set(data) - known
    if extra:
        raise ConfigError(f"unknown keys in [{section}]: {sorted(extra)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"[{section}]: {exc}") from None


@dataclass(frozen=True)
class RSpec:
    """Confidence thresholds: ``explicit`` values, ``constant``, evenly spaced
    ``linspace`` over ``[lo, hi]``, or ``uniform`` draws in ``[lo, hi]`` with the
    first and last agents pinned to ``lo`` and ``hi``."""

    kind: str = "explicit"
    values: tuple | None = None
    value: float | None = None
    lo: float | None = None
    hi: float | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.values is not None:
            object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if self.kind == "explicit" and self.values is None:
            raise ConfigError("explicit r needs 'values'")
        if self.kind == "constant" and self.value is None:
            raise ConfigError("constant r needs 'value'")
        if self.kind in ("linspace", "uniform") and (self.lo is None or self.hi is None):
            raise ConfigError(f"{self.kind} r needs 'lo' and 'hi'")
        if self.kind not in ("explicit", "constant", "linspace", "uniform"):
            raise ConfigError(f"unknown r kind {self.kind!r}")

    def build(self, n: int) -> np.ndarray:
        if self.kind == "explicit":
            if len(self.values) != n:
                raise ConfigError(f"r has {len(self.values)} values for n={n}")
            return np.array(self.values)
        if self.kind == "constant":
            return np.full(n, float(self.value))
        if self.kind == "linspace":
            return np.linspace(self.lo, self.hi, n)
        u = rng.uniforms(self.seed or 0, 0, rng.POPULATION, 0, n)
        r = self.lo + (self.hi - self.lo) * u
        r[0], r[-1] = self.lo, self.hi
        return r


@dataclass(frozen=True)
class PopulationSpec:
    n: int
    r: RSpec
    omega: float | tuple = 0.5

    def __post_init__(self):
        if isinstance(self.r, dict):
            object.__setattr__(self, "r", _take(RSpec, self.r, "population.r"))
        if isinstance(self.omega, (list, tuple)):
            object.__setattr__(self, "omega", tuple(float(v) for v in self.omega))
        if not (isinstance(self.n, int) and self.n >= 3):
            raise ConfigError(f"population.n must be an integer >= 3, got {self.n!r}")

    def build(self) -> Population:
        try:
            return Population(self.r.build(self.n), np.asarray(self.omega, dtype=np.float64))
        except HKError as exc:
            raise ConfigError(f"[population]: {exc}") from None


@dataclass(frozen=True)
class NoiseSpec:
    eta: float
    kind: str = "uniform"
    sigma: float | None = None
    beta: float | None = None

    def build(self) -> NoiseModel:
        try:
            return NoiseModel(float(self.eta), NoiseKind(self.kind), self.sigma, self.beta)
        except (HKError, ValueError) as exc:
            raise ConfigError(f"[noise]: {exc}") from None


@dataclass(frozen=True)
class X0Spec:
    """Initial opinions: ``constant``, ``explicit``, or ``uniform`` on [0, 1]
    drawn per replicate from the run's seed."""

    kind: str = "constant"
    value: float | None = 0.5
    values: tuple | None = None

    def __post_init__(self):
        if self.values is not None:
            object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if self.kind not in ("constant", "explicit", "uniform"):
            raise ConfigError(f"unknown x0 kind {self.kind!r}")
        if self.kind == "explicit" and self.values is None:
            raise ConfigError("explicit x0 needs 'values'")
        if self.kind == "constant" and self.value is None:
            raise ConfigError("constant x0 needs 'value'")

    def build(self, n: int, seed: int, replicate: int) -> np.ndarray:
        if self.kind == "constant":
            x = np.full(n, float(self.value))
        elif self.kind == "explicit":
            if len(self.values) != n:
                raise ConfigError(f"x0 has {len(self.values)} values for n={n}")
            x = np.array(self.values)
        else:
            x = rng.uniforms(seed, replicate, rng.INIT, 0, n)
        if not np.all((x >= 0) & (x <= 1)):
            raise ConfigError("initial opinions must lie in [0, 1]")
        return x


@dataclass(frozen=True)
class OutputSpec:
    dir: str = "out"
    csv: str = "summary.csv"
    jsonl: bool = False
    svg: bool = False


@dataclass(frozen=True)
class ReachSpec:
    """Certification task: a law, its parameters, sampled initial states and adversaries."""

    law: str
    params: dict = field(default_factory=dict)
    n_initial: int = 20
    n_random_adversaries: int = 100
    horizon: int | None = None
    trace: str | None = "reach_trace.jsonl"


@dataclass(frozen=True)
class ExperimentConfig:
    population: PopulationSpec
    noise: NoiseSpec
    variant: str = "EnvNoise"
    x0: X0Spec = field(default_factory=X0Spec)
    horizon: int = DEFAULT_HORIZON
    replicates: int = 1
    seed: int = 0
    alpha: float = 0.01
    burn_in: int | None = None
    downsample: int | None = None
    name: str = "run"
    outputs: OutputSpec = field(default_factory=OutputSpec)
    reach: ReachSpec | None = None

    def __post_init__(self):
        for key, cls in (("population", PopulationSpec), ("noise", NoiseSpec), ("x0", X0Spec),
                         ("outputs", OutputSpec), ("reach", ReachSpec)):
            val = getattr(self, key)
            if isinstance(val, dict):
                object.__setattr__(self, key, _take(cls, val, key))
        try:
            ModelVariant(self.variant)
        except ValueError:
            raise ConfigError(f"unknown variant {self.variant!r}") from None
        if not (isinstance(self.horizon, int) and self.horizon >= 1):
            raise ConfigError(f"horizon must be an integer >= 1, got {self.horizon!r}")
        if not (isinstance(self.replicates, int) and self.replicates >= 1):
            raise ConfigError("replicates must be an integer >= 1")
        if not (isinstance(self.seed, int) and self.seed >= 0):
            raise ConfigError("seed must be a nonnegative integer")
        if not self.alpha > 0:
            raise ConfigError("alpha must be positive")
        if self.burn_in is not None and not (0 <= self.burn_in <= self.horizon):
            raise ConfigError("burn_in must lie in [0, horizon]")
        if self.downsample is not None and self.downsample < 1:
            raise ConfigError("downsample must be >= 1")

    # -- derived objects

    @property
    def model_variant(self) -> ModelVariant:
        return ModelVariant(self.variant)

    def build_population(self) -> Population:
        return self.population.build()

    def build_noise(self) -> NoiseModel:
        return self.noise.build()

    def initial_state(self, replicate: int) -> np.ndarray:
        return self.x0.build(self.population.n, self.seed, replicate)

    # -- serialization

    def to_dict(self) -> dict:
        return _drop_none(_tuples_to_lists(asdict(self)))

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        return _take(cls, dict(data), "root")

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    @classmethod
    def from_toml(cls, text: str) -> "ExperimentConfig":
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML: {exc}") from None
        return cls.from_dict(data)

    def config_hash(self) -> str:
        """Stable digest of everything that affects results (outputs excluded)."""
        d = self.to_dict()
        d.pop("outputs", None)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def with_(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)


def _tuples_to_lists(obj):
    if isinstance(obj, dict):
        return {k: _tuples_to_lists(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_tuples_to_lists(v) for v in obj]
    return obj


def load_config(path: str | os.PathLike, apply_env: bool = True) -> ExperimentConfig:
    """Read a config file; ``HKNOISE_SEED`` overrides the master seed when set."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    cfg = ExperimentConfig.from_toml(text)
    return apply_seed_override(cfg) if apply_env else cfg


def apply_seed_override(cfg: ExperimentConfig) -> ExperimentConfig:
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None or raw == "":
        return cfg
    try:
        seed = int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}") from None
    return cfg.with_(seed=seed)


def save_config(cfg: ExperimentConfig, path: str | os.PathLike) -> None:
    Path(path).write_text(cfg.to_toml())


CONFIG_DIR = Path(__file__).parent / "configs"


def builtin_config(name: str) -> ExperimentConfig:
    path = CONFIG_DIR / f"{name}.toml"
    if not path.exists():
        known = sorted(p.stem for p in CONFIG_DIR.glob("*.toml"))
        raise ConfigError(f"no built-in config {name!r}; available: {known}")
    return load_config(path)
