"""Monte Carlo estimate of the expected filtering MSE of a schedule.

Each draw simulates one trajectory, filters its scheduled observations
and scores the time-averaged squared error of the output estimates.  Draw
``k`` takes its trajectory noise from stream ``(seed, TRAJECTORY, k)`` and
its filter noise from ``(seed, FILTER, k)``, so the result does not depend
on how draws are batched or distributed over workers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ipfsched import _random
from ipfsched.filtering import draw_filter_noise, filter_batch
from ipfsched.model import DynamicalSystem, draw_trajectory_noise, simulate_batch
from ipfsched.schedule import MeasurementSchedule

# draws processed together; fixed so results never depend on it
BATCH_SIZE = 50


class UnevaluableScheduleError(RuntimeError):
    """Every Monte Carlo draw degenerated, so the schedule has no cost."""


def trajectory_mse(z, zhat) -> float:
    """Mean over time of the squared Euclidean error ``||z(t) - zhat(t)||^2``."""
    z = np.asarray(z, dtype=float)
    zhat = np.asarray(zhat, dtype=float)
    if z.shape[0] != zhat.shape[0]:
        raise ValueError(f"length mismatch: {z.shape[0]} vs {zhat.shape[0]}")
    diff = (z - zhat).reshape(z.shape[0], -1)
    return float(np.mean(np.sum(diff * diff, axis=1)))


@dataclass(frozen=True)
class CostEstimate:
    """Monte Carlo cost of one schedule.

    ``per_draw_mse`` holds one entry per draw; degenerate draws are NaN and
    excluded from ``value``.
    """

    value: float
    draws: int
    per_draw_mse: np.ndarray
    degenerate_draws: int

    @property
    def has_degenerate(self) -> bool:
        return self.degenerate_draws > 0

    @property
    def valid_mse(self) -> np.ndarray:
        return self.per_draw_mse[~np.isnan(self.per_draw_mse)]

    @property
    def standard_error(self) -> float:
        valid = self.valid_mse
        if valid.size < 2:
            return float("nan")
        return float(valid.std(ddof=1) / np.sqrt(valid.size))


def evaluate_draws(
    system: DynamicalSystem,
    schedules: Sequence[MeasurementSchedule],
    draws: Sequence[int],
    num_particles: int,
    seed: _random.SeedLike,
    *,
    shared_filter_noise: bool = True,
) -> np.ndarray:
    """Per-draw MSE of several schedules on the same trajectories.

    Returns a ``(len(draws), len(schedules))`` array, NaN where the filter
    degenerated.  With ``shared_filter_noise`` every schedule is filtered
    with the same particle noise for a given draw (a fully paired
    comparison); otherwise schedule ``s`` uses stream ``(FILTER, k, s)``.
    """
    root = _random.as_seed_sequence(seed)
    for schedule in schedules:
        if schedule.horizon != system.horizon:
            raise ValueError("schedule horizon does not match the system")
    draws = list(draws)
    out = np.empty((len(draws), len(schedules)))
    for start in range(0, len(draws), BATCH_SIZE):
        chunk = draws[start:start + BATCH_SIZE]
        traj_noise = [
            draw_trajectory_noise(system, _random.rng_for(root, _random.TRAJECTORY, k)) for k in chunk
        ]
        _, outputs, observations = simulate_batch(system, traj_noise)
        if shared_filter_noise:
            shared = [
                draw_filter_noise(system, num_particles, _random.rng_for(root, _random.FILTER, k))
                for k in chunk
            ]
        for s, schedule in enumerate(schedules):
            if shared_filter_noise:
                noise = shared
            else:
                noise = [
                    draw_filter_noise(system, num_particles, _random.rng_for(root, _random.FILTER, k, s))
                    for k in chunk
                ]
            estimates, degenerate_at = filter_batch(system, schedule, observations, noise)
            diff = outputs - estimates
            mse = np.mean(np.sum(diff * diff, axis=2), axis=1)
            mse[degenerate_at >= 0] = np.nan
            out[start:start + len(chunk), s] = mse
    return out


def summarize(per_draw_mse: np.ndarray) -> CostEstimate:
    per_draw_mse = np.asarray(per_draw_mse, dtype=float)
    degenerate = int(np.isnan(per_draw_mse).sum())
    if degenerate == per_draw_mse.size:
        raise UnevaluableScheduleError(
            f"schedule unevaluable: all {per_draw_mse.size} draws degenerated"
        )
    value = float(np.mean(per_draw_mse[~np.isnan(per_draw_mse)]))
    return CostEstimate(value, per_draw_mse.size, per_draw_mse, degenerate)


def estimate_expected_mse(
    system: DynamicalSystem,
    schedule: MeasurementSchedule,
    K: int,
    num_particles: int,
    seed: _random.SeedLike,
) -> CostEstimate:
    """Average per-draw MSE over ``K`` independent draws.

    Degenerate draws are counted and left out of the mean; if all ``K``
    degenerate, :class:`UnevaluableScheduleError` is raised.
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if num_particles < 1:
        raise ValueError(f"num_particles must be >= 1, got {num_particles}")
    mse = evaluate_draws(system, [schedule], range(K), num_particles, seed)[:, 0]
    return summarize(mse)


@dataclass(frozen=True)
class MonteCarloCost:
    """Picklable cost oracle ``(schedule, seed) -> CostEstimate``.

    With ``common_seed`` set every schedule is scored on the same draws
    (common random numbers) and the per-call seed is ignored.
    """

    system: DynamicalSystem
    draws: int
    num_particles: int
    common_seed: Optional[int] = None

    def __call__(self, schedule: MeasurementSchedule, seed: _random.SeedLike) -> CostEstimate:
        if self.common_seed is not None:
            seed = self.common_seed
        return estimate_expected_mse(self.system, schedule, self.draws, self.num_particles, seed)


def relative_gain(mse_reg: float, mse_opt: float) -> float:
    """``(mse_reg - mse_opt) / mse_reg``; positive when the optimised schedule wins."""
    if not mse_reg > 0:
        raise ValueError(f"relative gain undefined for reference MSE {mse_reg}")
    return (mse_reg - mse_opt) / mse_reg


@dataclass(frozen=True)
class GainSample:
    mse_reg: float
    mse_opt: float

    @property
    def gain(self) -> float:
        return relative_gain(self.mse_reg, self.mse_opt)
