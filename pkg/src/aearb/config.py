"""Experiment configuration loaded from YAML.

A config file has four blocks::

    model:       {kind: constant_phi, phi: 0.6, sigma: 0.2, s0: 1.0, geometric: true}
    simulation:  {horizons: [81], steps_per_unit: 100, n_paths: 10000, seed: 7}
    bounds:      {c1: 0.25, c2: auto, delta: 0.1, gamma3: auto}
    output:      {directory: out, formats: [csv, json, human]}

Missing optional keys take the defaults of the dataclasses below.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import yaml

from .errors import ConfigurationError
from .measure import OrthogonalSpec
from .sde import ModelSpec, constant_phi_model, ou_phi_model

AUTO = "auto"
FORMATS = ("csv", "json", "human")
MODEL_KINDS = ("constant_phi", "ou_phi")


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "constant_phi"
    sigma: float = 0.2
    s0: float = 1.0
    phi: float | None = None
    geometric: bool = True
    kappa: float | None = None
    eta: float | None = None
    phi0: float = 0.0

    def build(self) -> ModelSpec:
        if self.kind == "constant_phi":
            return constant_phi_model(self.phi, self.sigma, self.s0, self.geometric)
        return ou_phi_model(self.kappa, self.eta, self.phi0, self.sigma, self.s0)


@dataclass(frozen=True)
class SimulationConfig:
    horizons: tuple = (81,)
    steps_per_unit: int = 100
    n_paths: int = 10_000
    seed: int = 0
    ldp_horizons: tuple = (10, 20, 40)
    ldp_paths: int | None = None
    chunk_size: int | None = None


@dataclass(frozen=True)
class BoundsConfig:
    c1: float = 0.25
    c2: float | str = AUTO
    delta: float | str = AUTO
    gamma3: float | str = AUTO
    freeze_fraction: float = 0.01
    orthogonal_nu: float = 0.0
    extend_factor: float = 2.0

    @property
    def resolved_delta(self) -> float:
        return self.c1 / 4 if self.delta == AUTO else float(self.delta)

    @property
    def resolved_gamma3(self) -> float | None:
        return None if self.gamma3 == AUTO else float(self.gamma3)

    @property
    def orthogonal(self) -> OrthogonalSpec:
        if self.orthogonal_nu > 0:
            return OrthogonalSpec.independent_bm(self.orthogonal_nu)
        return OrthogonalSpec()


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    formats: tuple = FORMATS


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    bounds: BoundsConfig = field(default_factory=BoundsConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def __post_init__(self):
        validate(self)

    def to_dict(self) -> dict:
        d = asdict(self)
        for block in d.values():
            for key, value in block.items():
                if isinstance(value, tuple):
                    block[key] = list(value)
        return d

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form, ignoring the output block."""
        body = self.to_dict()
        body.pop("output")
        text = json.dumps(body, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def with_overrides(self, seed: int | None = None, out_dir: str | None = None,
                       formats: tuple | None = None, chunk_size: int | None = None) -> "ExperimentConfig":
        sim, out = self.simulation, self.output
        if seed is not None:
            sim = replace(sim, seed=int(seed))
        if chunk_size is not None:
            sim = replace(sim, chunk_size=int(chunk_size))
        if out_dir is not None:
            out = replace(out, directory=str(out_dir))
        if formats is not None:
            out = replace(out, formats=tuple(formats))
        return replace(self, simulation=sim, output=out)


def _positive(name, value, allow_zero=False):
    ok = isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)
    if not ok or value < 0 or (value == 0 and not allow_zero):
        need = ">= 0" if allow_zero else "> 0"
        raise ConfigurationError(f"{name} must be a finite number {need}, got {value!r}")


def _horizons(name, values, allow_empty=False):
    if not values and not allow_empty:
        raise ConfigurationError(f"{name} must be a non-empty list of integers")
    for v in values:
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            raise ConfigurationError(f"{name} must contain positive integers, got {v!r}")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigurationError(f"{name} must be strictly increasing, got {list(values)}")


def validate(cfg: ExperimentConfig) -> None:
    m, s, b, o = cfg.model, cfg.simulation, cfg.bounds, cfg.output
    if m.kind not in MODEL_KINDS:
        raise ConfigurationError(f"model.kind must be one of {MODEL_KINDS}, got {m.kind!r}")
    _positive("model.sigma", m.sigma)
    _positive("model.s0", m.s0)
    if m.kind == "constant_phi":
        if m.phi is None:
            raise ConfigurationError("model.phi is required for kind constant_phi")
        if isinstance(m.phi, bool) or not isinstance(m.phi, (int, float)) or not math.isfinite(m.phi):
            raise ConfigurationError(f"model.phi must be a finite number, got {m.phi!r}")
    else:
        for name in ("kappa", "eta"):
            _positive(f"model.{name}", getattr(m, name))

    _horizons("simulation.horizons", list(s.horizons))
    _horizons("simulation.ldp_horizons", list(s.ldp_horizons), allow_empty=True)
    if s.ldp_horizons and len(s.ldp_horizons) < 3:
        raise ConfigurationError("simulation.ldp_horizons needs at least 3 horizons (or none)")
    for name in ("steps_per_unit", "n_paths"):
        v = getattr(s, name)
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            raise ConfigurationError(f"simulation.{name} must be a positive integer, got {v!r}")
    if s.ldp_paths is not None and (not isinstance(s.ldp_paths, int) or s.ldp_paths < 1):
        raise ConfigurationError(f"simulation.ldp_paths must be a positive integer, got {s.ldp_paths!r}")
    if s.chunk_size is not None and (not isinstance(s.chunk_size, int) or s.chunk_size < 1):
        raise ConfigurationError(f"simulation.chunk_size must be a positive integer, got {s.chunk_size!r}")
    if isinstance(s.seed, bool) or not isinstance(s.seed, int) or s.seed < 0:
        raise ConfigurationError(f"simulation.seed must be a non-negative integer, got {s.seed!r}")

    _positive("bounds.c1", b.c1)
    if b.c2 != AUTO:
        _positive("bounds.c2", b.c2)
    if b.delta != AUTO:
        _positive("bounds.delta", b.delta)
        if not b.delta < b.c1 / 2:
            raise ConfigurationError(f"bounds.delta must satisfy δ < c₁/2, got delta={b.delta}, c1={b.c1}")
    if b.gamma3 != AUTO:
        _positive("bounds.gamma3", b.gamma3)
        if not 2 * b.gamma3 < b.resolved_delta / 2:
            raise ConfigurationError(f"bounds.gamma3 must satisfy 2γ₃ < γ₂/2 = δ/2, got {b.gamma3}")
    if not 0 <= b.freeze_fraction < 1:
        raise ConfigurationError(f"bounds.freeze_fraction must lie in [0, 1), got {b.freeze_fraction}")
    _positive("bounds.orthogonal_nu", b.orthogonal_nu, allow_zero=True)
    if not (isinstance(b.extend_factor, (int, float)) and b.extend_factor >= 1):
        raise ConfigurationError(f"bounds.extend_factor must be >= 1, got {b.extend_factor!r}")

    bad = [f for f in o.formats if f not in FORMATS]
    if bad or not o.formats:
        raise ConfigurationError(f"output.formats must be a non-empty subset of {FORMATS}, got {list(o.formats)}")


def _block(cls, raw, name):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigurationError(f"block {name!r} must be a mapping")
    known = set(cls.__dataclass_fields__)
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigurationError(f"unknown key(s) in {name}: {unknown}")
    values = {k: tuple(v) if isinstance(v, list) else v for k, v in raw.items()}
    return cls(**values)


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigurationError("config must be a mapping with model/simulation/bounds/output blocks")
    blocks = {"model": ModelConfig, "simulation": SimulationConfig, "bounds": BoundsConfig, "output": OutputConfig}
    unknown = sorted(set(raw) - set(blocks))
    if unknown:
        raise ConfigurationError(f"unknown config block(s): {unknown}")
    return ExperimentConfig(**{name: _block(cls, raw.get(name), name) for name, cls in blocks.items()})


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"config {path} is not valid YAML: {exc}") from exc
    return config_from_dict(raw)
