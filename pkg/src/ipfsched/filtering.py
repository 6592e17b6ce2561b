"""Intermittent sampling-importance-resampling particle filter.

The filter alternates prediction (propagate each particle through the
transition with fresh process noise) and correction (reweight by the
observation likelihood, then resample systematically).  Correction only
runs at scheduled times; elsewhere the weights stay uniform and the
estimate is the plain ensemble mean.

The work is done by :func:`filter_batch`, which runs ``B`` independent
filters at once on stacked arrays.  Each filter consumes a pre-drawn
:class:`FilterNoise`, so a run is reproducible from its own random stream
no matter which batch it is computed in.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from ipfsched.model import DynamicalSystem, LinearGaussianSystem
from ipfsched.schedule import MeasurementSchedule, encode


@dataclass(frozen=True)
class ParticleEnsemble:
    particles: np.ndarray  # (P, n)
    weights: np.ndarray  # (P,)

    @property
    def size(self) -> int:
        return len(self.weights)

    def mean(self) -> np.ndarray:
        return self.weights @ self.particles


@dataclass(frozen=True)
class FilterResult:
    """Estimates ``zhat(0..T)``, truncated at the first degenerate correction.

    ``variances`` is only filled in by the Kalman oracle.
    """

    estimates: np.ndarray
    degenerate_at: Optional[int] = None
    variances: Optional[np.ndarray] = None

    @property
    def degenerate(self) -> bool:
        return self.degenerate_at is not None


@dataclass(frozen=True)
class FilterNoise:
    initial: np.ndarray  # (P, n)
    process: np.ndarray  # (T, P, nw)
    uniforms: np.ndarray  # (T+1,), one resampling offset per time step


def draw_filter_noise(
    system: DynamicalSystem, num_particles: int, rng: np.random.Generator
) -> FilterNoise:
    if num_particles < 1:
        raise ValueError(f"num_particles must be >= 1, got {num_particles}")
    T = system.horizon
    initial = system.sample_initial(rng, (num_particles,))
    process = system.sample_process_noise(rng, (T, num_particles))
    uniforms = rng.random(T + 1)
    return FilterNoise(initial, process, uniforms)


def systematic_resample(weights, rng_or_u) -> np.ndarray:
    """Systematic resampling of normalised weights.

    ``rng_or_u`` is either a Generator or a ready-drawn offset in [0, 1).
    Index ``i`` is returned ``floor(P w_i)`` or ``ceil(P w_i)`` times and
    zero-weight indices never appear.
    """
    weights = np.asarray(weights, dtype=float)
    if weights.ndim != 1 or weights.size == 0:
        raise ValueError("weights must be a non-empty 1-d array")
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError("weights must be nonnegative and sum to 1")
    u = rng_or_u.random() if isinstance(rng_or_u, np.random.Generator) else float(rng_or_u)
    return _systematic_indices(weights[None, :], np.array([u]))[0]


def _systematic_indices(weights: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Row-wise systematic resampling of a ``(B, P)`` weight matrix."""
    B, P = weights.shape
    cum = np.cumsum(weights, axis=1)
    cum = cum / cum[:, -1:]
    positions = (u[:, None] + np.arange(P)[None, :]) / P
    # shift row b into [2b, 2b+1] so a single searchsorted covers the batch
    shift = 2.0 * np.arange(B)[:, None]
    flat = np.searchsorted((cum + shift).ravel(), (positions + shift).ravel(), side="right")
    idx = flat.reshape(B, P) - np.arange(B)[:, None] * P
    return np.minimum(idx, P - 1)


def normalise_log_weights(loglik: np.ndarray):
    """Row-normalised weights from log-likelihoods of shape ``(B, P)``.

    Also returns the raw sums of ``exp(loglik)``; a raw sum of exactly 0
    means every weight underflowed, the degeneracy signal.  Rows with no
    finite log-weight come back uniform.
    """
    with np.errstate(under="ignore"):
        raw_sum = np.exp(loglik).sum(axis=1)
    shift = np.max(loglik, axis=1, keepdims=True)
    shift[~np.isfinite(shift)] = 0.0
    with np.errstate(under="ignore"):
        weights = np.exp(loglik - shift)
    total = weights.sum(axis=1, keepdims=True)
    empty = total[:, 0] == 0.0
    weights = weights / np.where(empty[:, None], 1.0, total)
    weights[empty] = 1.0 / loglik.shape[1]
    return weights, raw_sum


def _anchored_mean(z: np.ndarray, weights: Optional[np.ndarray]) -> np.ndarray:
    """Weighted mean over the particle axis, offset by the first particle.

    Exact when all particles coincide, which a plain weighted sum is not.
    """
    anchor = z[:, 0]
    dev = z - anchor[:, None]
    if weights is None:
        return anchor + dev.mean(axis=1)
    return anchor + np.einsum("bp,bpk->bk", weights, dev)


def filter_batch(
    system: DynamicalSystem,
    schedule: MeasurementSchedule,
    observations: np.ndarray,
    noise: Sequence[FilterNoise],
):
    """Run ``B`` intermittent SIR filters.

    ``observations`` has shape ``(B, T+1, m)``; only scheduled rows are read.
    Returns ``(estimates, degenerate_at)`` with shapes ``(B, T+1, p)`` and
    ``(B,)``; ``degenerate_at`` is -1 for runs that never degenerated.
    Estimates of a degenerate run are NaN from the degenerate time on.
    """
    T = system.horizon
    measured = encode(schedule)
    x = np.stack([nz.initial for nz in noise])  # (B, P, n)
    w = np.stack([nz.process for nz in noise])  # (B, T, P, nw)
    u = np.stack([nz.uniforms for nz in noise])  # (B, T+1)
    B, P = x.shape[:2]
    estimates = np.empty((B, T + 1, system.output_dim))
    degenerate_at = np.full(B, -1, dtype=int)
    alive = np.ones(B, dtype=bool)
    rows = np.arange(B)[:, None]

    for t in range(T + 1):
        if t > 0:
            x = system.step(t - 1, x, w[:, t - 1])
        z = system.output(t, x)  # (B, P, p)
        if not measured[t]:
            estimates[:, t] = _anchored_mean(z, None)
            continue
        loglik = system.measurement_log_likelihood(t, x, observations[:, t, None, :])
        weights, raw_sum = normalise_log_weights(loglik)
        dead_now = alive & (raw_sum == 0.0)
        if dead_now.any():
            degenerate_at[dead_now] = t
            alive &= ~dead_now
        weights[~alive] = 1.0 / P
        estimates[:, t] = _anchored_mean(z, weights)
        x = x[rows, _systematic_indices(weights, u[:, t])]

    for b in np.flatnonzero(degenerate_at >= 0):
        estimates[b, degenerate_at[b]:] = np.nan
    return estimates, degenerate_at


def run_filter(
    system: DynamicalSystem,
    schedule: MeasurementSchedule,
    observations: Mapping[int, np.ndarray],
    num_particles: int,
    rng: np.random.Generator,
) -> FilterResult:
    """Filter one observation sequence; the result is truncated on degeneracy."""
    if set(observations) != set(schedule.times):
        raise ValueError("observations must be keyed exactly by the schedule times")
    T = system.horizon
    obs = np.zeros((1, T + 1, system.obs_dim))
    for t, y in observations.items():
        obs[0, t] = y
    noise = draw_filter_noise(system, num_particles, rng)
    estimates, degenerate_at = filter_batch(system, schedule, obs, [noise])
    if degenerate_at[0] >= 0:
        t_star = int(degenerate_at[0])
        return FilterResult(estimates[0, :t_star], degenerate_at=t_star)
    return FilterResult(estimates[0])


def run_kalman_oracle(
    system: LinearGaussianSystem,
    schedule: MeasurementSchedule,
    observations: Mapping[int, np.ndarray],
) -> FilterResult:
    """Exact posterior means of a scalar linear-Gaussian system.

    The update is skipped at unscheduled times, mirroring the particle filter.
    """
    if not isinstance(system, LinearGaussianSystem):
        raise TypeError("the Kalman oracle needs a LinearGaussianSystem")
    if set(observations) != set(schedule.times):
        raise ValueError("observations must be keyed exactly by the schedule times")
    T = system.horizon
    mean, var = system.initial_mean, system.initial_variance
    means = np.empty((T + 1, 1))
    variances = np.empty(T + 1)
    for t in range(T + 1):
        if t > 0:
            mean = system.a * mean
            var = system.a**2 * var + system.q
        if t in observations:
            y = float(np.asarray(observations[t]).reshape(-1)[0])
            s = system.c**2 * var + system.r
            if s > 0:
                gain = var * system.c / s
                mean = mean + gain * (y - system.c * mean)
                var = (1.0 - gain * system.c) * var
        means[t, 0] = mean
        variances[t] = var
    return FilterResult(means, variances=variances)
