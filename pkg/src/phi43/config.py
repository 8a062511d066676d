"""Run configuration: nested JSON sections, dotted overrides, content hash."""
from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path

import numpy as np

from .spectral import TorusGrid
from .transform import SolverOptions


class ConfigError(ValueError):
    """Unknown key, bad value or malformed config file."""


@dataclass
class SolverConfig:
    tol: float = 1e-10
    max_iter: int = 8
    blowup: float = 1e6
    y_order: int = 2
    order: int = 2
    precondition: bool = True

    def options(self, eps: float) -> SolverOptions:
        return SolverOptions(self.tol, self.max_iter, self.blowup, self.y_order,
                             self.precondition, self.order, eps)


@dataclass
class InitialConfig:
    """``phi_0 = amplitude * shape / ||shape||_inf``."""

    shape: str = "cosine"  # constant | cosine | random
    amplitude: float = 1.0
    seed: int = 0


@dataclass
class ExperimentConfig:
    name: str = ""
    samples: int = 100
    deltas: list = field(default_factory=lambda: [0.5, 0.25, 0.125, 0.0625])
    families: list = field(default_factory=lambda: ["sharp", "gaussian"])
    magnitudes: list = field(default_factory=lambda: [1.0, 5.0, 10.0])
    window: list = field(default_factory=lambda: [2.0, 4.0])
    realizations: int = 1
    split_n: int = 0  # 0 picks n from the transform solve
    alpha: float = 0.5


@dataclass
class RunConfig:
    d: int = 3
    N: int = 16
    T: float = 0.25
    dt: float = 1e-3
    delta: float = 0.125
    family: str = "sharp"
    seed: int = 0
    eps: float = 0.05
    save_every: int = 10
    dealias: bool = False
    noise: bool = True
    solver: SolverConfig = field(default_factory=SolverConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("d", "N", "T", "dt", "delta", "eps", "save_every"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.d not in (1, 2, 3):
            raise ConfigError("d must be 1, 2 or 3")
        if self.N < 4 or self.N & (self.N - 1):
            raise ConfigError("N must be a power of two >= 4")
        if self.family not in ("sharp", "gaussian"):
            raise ConfigError(f"unknown mollifier family {self.family!r}")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.solver.order not in (1, 2) or self.solver.y_order not in (1, 2):
            raise ConfigError("integration orders must be 1 or 2")
        if not (self.solver.tol > 0 and self.solver.max_iter > 0 and self.solver.blowup > 0):
            raise ConfigError("solver tolerances must be positive")
        if self.initial.shape not in ("constant", "cosine", "random"):
            raise ConfigError(f"unknown initial shape {self.initial.shape!r}")
        n = round(self.T / self.dt)
        if abs(n * self.dt - self.T) > 1e-9 * self.T:
            raise ConfigError("T must be an integer multiple of dt")
        if self.dt > self.delta**2:
            warnings.warn(f"dt={self.dt} exceeds the stability hint delta^2={self.delta**2:.3g}",
                          stacklevel=2)

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def stride(self) -> int:
        """``save_every`` clipped so that it divides the step count."""
        s = min(self.save_every, self.n_steps)
        while self.n_steps % s:
            s -= 1
        return s

    def grid(self) -> TorusGrid:
        return TorusGrid(self.d, self.N, dealias=self.dealias)

    def options(self) -> SolverOptions:
        return self.solver.options(self.eps)

    def initial_field(self) -> np.ndarray:
        g = self.grid()
        ini = self.initial
        if ini.shape == "constant":
            return np.full(g.shape, float(ini.amplitude))
        if ini.shape == "cosine":
            x = g.points
            f = np.cos(2 * np.pi * x[0])
            if g.d > 1:
                f = f + 0.5 * np.sin(2 * np.pi * sum(x[1:]))
        else:
            from .lp import random_band_limited
            f = random_band_limited(g, np.random.default_rng(ini.seed), 1.5, kmax=4.0)
        return ini.amplitude * f / np.max(np.abs(f))

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        return _build(cls, data, "")

    @classmethod
    def load(cls, path, overrides=()) -> "RunConfig":
        data = load_file(path) if path else {}
        for item in overrides:
            apply_override(data, item)
        return cls.from_dict(data)

    def with_overrides(self, overrides) -> "RunConfig":
        data = self.to_dict()
        for item in overrides:
            apply_override(data, item)
        return RunConfig.from_dict(data)


def _build(cls, data: dict, prefix: str):
    if not isinstance(data, dict):
        raise ConfigError(f"section {prefix or '<root>'} must be a mapping")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(prefix + k for k in unknown)}")
    kw = {}
    defaults = cls()
    for name, value in data.items():
        current = getattr(defaults, name)
        if is_dataclass(current):
            kw[name] = _build(type(current), value, prefix + name + ".")
        else:
            kw[name] = _coerce(current, value, prefix + name)
    return replace(defaults, **kw)


def _coerce(current, value, key):
    if isinstance(current, bool):
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{key} must be true or false")
    if isinstance(current, int):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
            raise ConfigError(f"{key} must be an integer")
        return int(value)
    if isinstance(current, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number")
        return float(value)
    if isinstance(current, str):
        if not isinstance(value, str):
            raise ConfigError(f"{key} must be a string")
        return value
    if isinstance(current, list):
        if not isinstance(value, list):
            raise ConfigError(f"{key} must be a list")
        return list(value)
    return value


def load_file(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config {p}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object")
    return data


def apply_override(data: dict, item: str) -> None:
    """Apply ``a.b=value`` in place; ``value`` is read as JSON, else as a string."""
    if "=" not in item:
        raise ConfigError(f"override must be KEY=VALUE, got {item!r}")
    key, raw = item.split("=", 1)
    parts = key.strip().split(".")
    if not all(parts):
        raise ConfigError(f"bad override key {key!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = data
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {key!r} descends into a scalar")
    node[parts[-1]] = value
