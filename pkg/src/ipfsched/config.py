"""Experiment configuration, stored as JSON.

Defaults reproduce the full-size benchmark experiment: T = 60, N = 21,
500 particles, K = 1000 draws, a GA of 50 individuals over 25 generations
and 100,000 draws for the gain histogram.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional

from ipfsched.model import BenchmarkSystem, DynamicalSystem, LinearGaussianSystem
from ipfsched.optimizer import GaParams

SYSTEMS = ("benchmark", "linear-gaussian")


@dataclass(frozen=True)
class LinearGaussianParams:
    a: float = 0.9
    c: float = 1.0
    q: float = 1.0
    r: float = 1.0
    initial_mean: float = 0.0
    initial_variance: float = 1.0


@dataclass(frozen=True)
class ExperimentConfig:
    system: str = "benchmark"
    linear_gaussian: LinearGaussianParams = field(default_factory=LinearGaussianParams)
    horizon: int = 60
    budget: int = 21
    particles: int = 500
    draws: int = 1000
    ga: GaParams = field(default_factory=GaParams)
    # random-trials budget; None means the GA's population_size * generations
    random_trials_budget: Optional[int] = None
    gain_draws: int = 100_000
    histogram_bins: int = 101
    histogram_range: tuple[float, float] = (-1.5, 1.0)
    common_random_numbers: bool = False
    paired_filter_noise: bool = True
    seed: int = 0
    out: str = "out"
    workers: int = 1

    def __post_init__(self) -> None:
        if self.system not in SYSTEMS:
            raise ValueError(f"system must be one of {SYSTEMS}, got {self.system!r}")
        for name in ("horizon", "particles", "draws", "gain_draws", "histogram_bins", "workers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 1 <= self.budget <= self.horizon + 1:
            raise ValueError(f"budget must be in [1, {self.horizon + 1}], got {self.budget}")
        if self.random_trials_budget is not None and self.random_trials_budget < 1:
            raise ValueError("random_trials_budget must be >= 1")
        lo, hi = self.histogram_range
        if not lo < hi:
            raise ValueError("histogram_range must be increasing")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")

    @property
    def rt_budget(self) -> int:
        if self.random_trials_budget is not None:
            return self.random_trials_budget
        return self.ga.population_size * self.ga.generations

    def build_system(self) -> DynamicalSystem:
        if self.system == "benchmark":
            return BenchmarkSystem(horizon=self.horizon)
        return LinearGaussianSystem(horizon=self.horizon, **asdict(self.linear_gaussian))

    # -- serialisation ----------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["histogram_range"] = list(self.histogram_range)
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "linear_gaussian" in data:
            data["linear_gaussian"] = _nested(LinearGaussianParams, data["linear_gaussian"])
        if "ga" in data:
            data["ga"] = _nested(GaParams, data["ga"])
        if "histogram_range" in data:
            data["histogram_range"] = tuple(float(v) for v in data["histogram_range"])
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    def with_overrides(self, assignments: list[str]) -> "ExperimentConfig":
        """Apply ``key=value`` strings; dotted keys reach nested sections.

        Values are parsed as JSON, falling back to a bare string.
        """
        data = self.to_dict()
        for item in assignments:
            key, sep, raw = item.partition("=")
            if not sep:
                raise ValueError(f"override {item!r} is not key=value")
            try:
                value = json.loads(raw)
            except json.JSONDecodeError:
                value = raw
            target = data
            *parents, leaf = key.strip().split(".")
            for p in parents:
                if not isinstance(target.get(p), dict):
                    raise ValueError(f"unknown config section {p!r}")
                target = target[p]
            if leaf not in target:
                raise ValueError(f"unknown config key {key!r}")
            target[leaf] = value
        return self.from_dict(data)

    def replace(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)


def _nested(cls, value):
    if isinstance(value, cls):
        return value
    if not isinstance(value, dict):
        raise ValueError(f"{cls.__name__} section must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(value) - known
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**value)
