"""Discrete-time stochastic state-space systems.

A system describes

    x(t+1) = f_t(x(t), w(t))      t = 0 .. T-1
    y(t)   = g_t(x(t), v(t))      t in the measurement schedule
    z(t)   = h_t(x(t))            t = 0 .. T
    x(0)   ~ F

Noise is never hidden inside the system: callers draw ``w`` and ``v`` with
the ``sample_*`` methods and pass them to :meth:`DynamicalSystem.step` and
:meth:`DynamicalSystem.measure`.  All methods broadcast over leading axes,
with the vector dimension always last, so the same code path evaluates a
single state of shape ``(n,)`` or a particle cloud of shape ``(K, P, n)``.
"""

from __future__ import annotations

import abc
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ipfsched.schedule import MeasurementSchedule

LOG_2PI = math.log(2.0 * math.pi)


class DynamicalSystem(abc.ABC):
    """Base class for systems with additive, known-density measurement noise."""

    state_dim: int
    obs_dim: int
    output_dim: int
    process_noise_dim: int
    horizon: int

    def _check_dims(self) -> None:
        for name in ("state_dim", "obs_dim", "output_dim", "process_noise_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")

    def _check_time(self, t: int, last: int) -> None:
        if not 0 <= t <= last:
            raise ValueError(f"time index {t} outside [0, {last}]")

    # -- model equations -------------------------------------------------
    def step(self, t: int, x, w) -> np.ndarray:
        """Return ``f_t(x, w)``; defined for ``0 <= t <= T-1``."""
        self._check_time(t, self.horizon - 1)
        return self._transition(t, np.asarray(x, dtype=float), np.asarray(w, dtype=float))

    def measure(self, t: int, x, v) -> np.ndarray:
        """Return ``g_t(x, v)``; defined for ``0 <= t <= T``."""
        self._check_time(t, self.horizon)
        return self._observation(t, np.asarray(x, dtype=float)) + np.asarray(v, dtype=float)

    def output(self, t: int, x) -> np.ndarray:
        self._check_time(t, self.horizon)
        return self._output(t, np.asarray(x, dtype=float))

    def measurement_log_likelihood(self, t: int, x, y) -> np.ndarray:
        """Log-density of observing ``y`` at time ``t`` given state ``x``.

        Reduces over the observation axis, so a ``(..., n)`` state array
        gives a ``(...)`` result.
        """
        self._check_time(t, self.horizon)
        return self._log_likelihood(t, np.asarray(x, dtype=float), np.asarray(y, dtype=float))

    # -- noise ------------------------------------------------------------
    @abc.abstractmethod
    def sample_initial(self, rng: np.random.Generator, size: Sequence[int] = ()) -> np.ndarray:
        """Draw from F; returns shape ``size + (n,)``."""

    @abc.abstractmethod
    def sample_process_noise(self, rng: np.random.Generator, size: Sequence[int] = ()) -> np.ndarray:
        """Draw w; returns shape ``size + (process_noise_dim,)``."""

    @abc.abstractmethod
    def sample_measurement_noise(self, times, rng: np.random.Generator) -> np.ndarray:
        """Draw one v(t) per entry of ``times``; returns ``(len(times), m)``."""

    # -- implementation hooks --------------------------------------------
    @abc.abstractmethod
    def _transition(self, t: int, x: np.ndarray, w: np.ndarray) -> np.ndarray: ...

    @abc.abstractmethod
    def _observation(self, t: int, x: np.ndarray) -> np.ndarray:
        """Noise-free part of the measurement, ``g_t(x, 0)``."""

    @abc.abstractmethod
    def _output(self, t: int, x: np.ndarray) -> np.ndarray: ...

    @abc.abstractmethod
    def _log_likelihood(self, t: int, x: np.ndarray, y: np.ndarray) -> np.ndarray: ...

    def simulate(self, schedule: MeasurementSchedule, rng: np.random.Generator) -> "Trajectory":
        return simulate(self, schedule, rng)


def _gaussian_logpdf(residual: np.ndarray, std) -> np.ndarray:
    std = np.asarray(std, dtype=float)
    with np.errstate(divide="ignore"):
        if np.all(std > 0):
            z = residual / std
            return np.sum(-0.5 * z * z - np.log(std) - 0.5 * LOG_2PI, axis=-1)
    # point mass: log-density 0 on the support, -inf elsewhere
    return np.sum(np.where(residual == 0.0, 0.0, -np.inf), axis=-1)


@dataclass(frozen=True)
class BenchmarkSystem(DynamicalSystem):
    """Univariate nonstationary growth model.

    ``x(t+1) = x/2 + 25 x/(1+x^2) + 8 cos(1.2 t) + w``, ``w ~ N(0, 1)``;
    ``y = x^2/20 + v``, ``v ~ N(0, (sin(0.25 t) + 2)^2)``; ``z = x``;
    ``x(0) ~ N(0, 25)``.
    """

    horizon: int = 60
    state_dim: int = field(default=1, init=False)
    obs_dim: int = field(default=1, init=False)
    output_dim: int = field(default=1, init=False)
    process_noise_dim: int = field(default=1, init=False)

    def __post_init__(self) -> None:
        self._check_dims()

    @staticmethod
    def measurement_std(t) -> np.ndarray:
        return np.sin(0.25 * np.asarray(t, dtype=float)) + 2.0

    def sample_initial(self, rng, size=()):
        return 5.0 * rng.standard_normal(tuple(size) + (1,))

    def sample_process_noise(self, rng, size=()):
        return rng.standard_normal(tuple(size) + (1,))

    def sample_measurement_noise(self, times, rng):
        times = np.asarray(times, dtype=float)
        return self.measurement_std(times)[:, None] * rng.standard_normal((times.size, 1))

    def _transition(self, t, x, w):
        return x / 2.0 + 25.0 * x / (1.0 + x * x) + 8.0 * math.cos(1.2 * t) + w

    def _observation(self, t, x):
        return x * x / 20.0

    def _output(self, t, x):
        return x

    def _log_likelihood(self, t, x, y):
        return _gaussian_logpdf(y - self._observation(t, x), self.measurement_std(t))


@dataclass(frozen=True)
class LinearGaussianSystem(DynamicalSystem):
    """Scalar linear-Gaussian system with identity output.

    ``x(t+1) = a x + w``, ``w ~ N(0, q)``; ``y = c x + v``, ``v ~ N(0, r)``;
    ``x(0) ~ N(initial_mean, initial_variance)``.  Zero variances are
    accepted and give deterministic (point-mass) noise, which the tests use
    for exact-recovery checks.
    """

    horizon: int = 60
    a: float = 0.9
    c: float = 1.0
    q: float = 1.0
    r: float = 1.0
    initial_mean: float = 0.0
    initial_variance: float = 1.0
    state_dim: int = field(default=1, init=False)
    obs_dim: int = field(default=1, init=False)
    output_dim: int = field(default=1, init=False)
    process_noise_dim: int = field(default=1, init=False)

    def __post_init__(self) -> None:
        self._check_dims()
        for name in ("q", "r", "initial_variance"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def sample_initial(self, rng, size=()):
        draw = rng.standard_normal(tuple(size) + (1,))
        return self.initial_mean + math.sqrt(self.initial_variance) * draw

    def sample_process_noise(self, rng, size=()):
        return math.sqrt(self.q) * rng.standard_normal(tuple(size) + (1,))

    def sample_measurement_noise(self, times, rng):
        n = np.asarray(times).size
        return math.sqrt(self.r) * rng.standard_normal((n, 1))

    def _transition(self, t, x, w):
        return self.a * x + w

    def _observation(self, t, x):
        return self.c * x

    def _output(self, t, x):
        return x

    def _log_likelihood(self, t, x, y):
        return _gaussian_logpdf(y - self.c * x, math.sqrt(self.r))


@dataclass(frozen=True)
class Trajectory:
    """One realisation: states and outputs for t = 0..T, observations on the schedule."""

    states: np.ndarray
    outputs: np.ndarray
    observations: Mapping[int, np.ndarray]

    @property
    def horizon(self) -> int:
        return len(self.states) - 1


@dataclass(frozen=True)
class TrajectoryNoise:
    """Every random input of one realisation, including v(t) at all times."""

    initial: np.ndarray  # (n,)
    process: np.ndarray  # (T, nw)
    measurement: np.ndarray  # (T+1, m)


def draw_trajectory_noise(system: DynamicalSystem, rng: np.random.Generator) -> TrajectoryNoise:
    T = system.horizon
    initial = system.sample_initial(rng)
    process = system.sample_process_noise(rng, (T,))
    measurement = system.sample_measurement_noise(np.arange(T + 1), rng)
    return TrajectoryNoise(initial, process, measurement)


def simulate_batch(system: DynamicalSystem, noise: Sequence[TrajectoryNoise]):
    """Run the model equations for a batch of realisations.

    Returns ``(states, outputs, observations)`` with shapes ``(B, T+1, n)``,
    ``(B, T+1, p)`` and ``(B, T+1, m)``.  Observations are produced at every
    time; callers keep only the scheduled ones.  Two schedules evaluated on
    the same noise therefore see identical measurements where they overlap.
    """
    T = system.horizon
    x = np.stack([nz.initial for nz in noise])
    w = np.stack([nz.process for nz in noise])
    v = np.stack([nz.measurement for nz in noise])
    B = x.shape[0]
    states = np.empty((B, T + 1, system.state_dim))
    states[:, 0] = x
    for t in range(T):
        x = system.step(t, x, w[:, t])
        states[:, t + 1] = x
    outputs = np.empty((B, T + 1, system.output_dim))
    observations = np.empty((B, T + 1, system.obs_dim))
    for t in range(T + 1):
        outputs[:, t] = system.output(t, states[:, t])
        observations[:, t] = system.measure(t, states[:, t], v[:, t])
    return states, outputs, observations


def simulate(
    system: DynamicalSystem, schedule: MeasurementSchedule, rng: np.random.Generator
) -> Trajectory:
    """Draw one trajectory with observations at the scheduled times only."""
    if schedule.horizon != system.horizon:
        raise ValueError("schedule horizon does not match the system")
    states, outputs, obs = simulate_batch(system, [draw_trajectory_noise(system, rng)])
    observations = {t: obs[0, t].copy() for t in schedule.times}
    return Trajectory(states[0], outputs[0], observations)
