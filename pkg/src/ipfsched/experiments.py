"""Experiment drivers behind the command-line interface.

Each ``cmd_*`` function runs one experiment from an :class:`ExperimentConfig`,
writes CSV tables plus a JSON summary into the output directory and
returns the summary dictionary.  Output files depend only on the config
(worker count and output path excluded), so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Any, Optional

import numpy as np

from ipfsched import _random
from ipfsched.config import ExperimentConfig
from ipfsched.estimator import (
    BATCH_SIZE,
    MonteCarloCost,
    evaluate_draws,
    relative_gain,
    summarize,
)
from ipfsched.filtering import draw_filter_noise, filter_batch
from ipfsched.model import DynamicalSystem, draw_trajectory_noise, simulate_batch
from ipfsched.optimizer import optimize_ga, optimize_random_trials
from ipfsched.parallel import worker_map
from ipfsched.schedule import MeasurementSchedule

log = logging.getLogger(__name__)

# per-command stream tags below the master seed
OPTIMIZE_GA, OPTIMIZE_RT, TRACE, GAIN, EVALUATE = 100, 101, 200, 300, 400


def _fmt(x: float) -> str:
    return repr(float(x))


def _config_echo(config: ExperimentConfig) -> dict[str, Any]:
    echo = config.to_dict()
    # neither may influence results, so neither goes into the files
    echo.pop("workers")
    echo.pop("out")
    return echo


def _write_summary(out: Path, name: str, summary: dict[str, Any]) -> None:
    text = json.dumps(summary, indent=2, sort_keys=True, allow_nan=True)
    (out / name).write_text(text + "\n", encoding="utf-8")


def _out_dir(config: ExperimentConfig) -> Path:
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _check(schedule: MeasurementSchedule, config: ExperimentConfig, label: str) -> None:
    if schedule.horizon != config.horizon:
        raise ValueError(f"{label} schedule horizon {schedule.horizon} != {config.horizon}")
    if schedule.cardinality() != config.budget:
        raise ValueError(
            f"{label} schedule has {schedule.cardinality()} times, budget is {config.budget}"
        )


def _chunks(n: int) -> list[range]:
    return [range(i, min(i + BATCH_SIZE, n)) for i in range(0, n, BATCH_SIZE)]


class _DrawChunk:
    """Picklable per-chunk evaluator for :func:`evaluate_draws`."""

    def __init__(self, system, schedules, particles, seed, paired):
        self.args = (system, schedules, particles, seed)
        self.paired = paired

    def __call__(self, draws: range) -> np.ndarray:
        system, schedules, particles, seed = self.args
        return evaluate_draws(system, schedules, draws, particles, seed, shared_filter_noise=self.paired)


def _run_draws(config, schedules, n, seed, map_fn, system=None) -> np.ndarray:
    system = system if system is not None else config.build_system()
    job = _DrawChunk(system, schedules, config.particles, seed, config.paired_filter_noise)
    parts = list(map_fn(job, _chunks(n)))
    return np.concatenate(parts, axis=0)


# -- optimize ------------------------------------------------------------------

def cmd_optimize(config: ExperimentConfig) -> dict[str, Any]:
    """GA and random trials at equal budget; convergence table and winning schedule."""
    out = _out_dir(config)
    T, N = config.horizon, config.budget
    cost = MonteCarloCost(
        config.build_system(),
        config.draws,
        config.particles,
        common_seed=config.seed if config.common_random_numbers else None,
    )
    with worker_map(config.workers) as map_fn:
        ga = optimize_ga(cost, T, N, config.ga, _random.child(config.seed, OPTIMIZE_GA), map_fn=map_fn)
        rt = optimize_random_trials(cost, T, N, config.rt_budget, _random.child(config.seed, OPTIMIZE_RT),
                                    map_fn=map_fn)

    with open(out / "convergence.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["evaluations", "ga_min", "ga_mean", "rt_min", "rt_mean"])
        for rec in ga.history:
            n = rec.evaluations
            rt_rec = rt.history[min(n, len(rt.history)) - 1]
            writer.writerow([n, _fmt(rec.min_cost), _fmt(rec.mean_cost), _fmt(rt_rec.min_cost),
                             _fmt(rt_rec.mean_cost)])
    (out / "schedule.txt").write_text(ga.best_schedule.to_text() + "\n", encoding="utf-8")

    summary = {
        "command": "optimize",
        "config": _config_echo(config),
        "ga": {
            "schedule": ga.best_schedule.to_text(),
            "cost": ga.best_cost,
            "evaluations": ga.evaluations_used,
            "killed": sum(rec.killed for rec in ga.history),
        },
        "random_trials": {
            "schedule": rt.best_schedule.to_text(),
            "cost": rt.best_cost,
            "evaluations": rt.evaluations_used,
            "killed": rt.history[-1].killed,
        },
    }
    _write_summary(out, "optimize_summary.json", summary)
    return summary


# -- trace ---------------------------------------------------------------------

def cmd_trace(
    config: ExperimentConfig,
    schedule_a: MeasurementSchedule,
    schedule_b: MeasurementSchedule,
    *,
    same_filter_seed: bool = False,
) -> dict[str, Any]:
    """Filter one simulated trajectory under two schedules, per-step table."""
    _check(schedule_a, config, "first")
    _check(schedule_b, config, "second")
    out = _out_dir(config)
    system = config.build_system()
    root = _random.child(config.seed, TRACE)
    traj_noise = draw_trajectory_noise(system, _random.rng_for(root, _random.TRAJECTORY))
    _, outputs, observations = simulate_batch(system, [traj_noise])

    results = []
    for i, schedule in enumerate((schedule_a, schedule_b)):
        key = 0 if same_filter_seed else i
        noise = draw_filter_noise(system, config.particles, _random.rng_for(root, _random.FILTER, key))
        est, degenerate_at = filter_batch(system, schedule, observations, [noise])
        results.append((est[0], int(degenerate_at[0])))

    (est_a, deg_a), (est_b, deg_b) = results
    mask_a, mask_b = schedule_a.mask(), schedule_b.mask()
    p = system.output_dim
    names = ["z"] if p == 1 else [f"z{j}" for j in range(p)]
    with open(out / "trace.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t"] + names + [f"zhat_a{n[1:]}" for n in names] + [f"zhat_b{n[1:]}" for n in names]
                        + ["measured_a", "measured_b", "status"])
        for t in range(config.horizon + 1):
            status = []
            if 0 <= deg_a <= t:
                status.append("degenerate_a")
            if 0 <= deg_b <= t:
                status.append("degenerate_b")
            writer.writerow([t] + [_fmt(v) for v in outputs[0, t]] + [_fmt(v) for v in est_a[t]]
                            + [_fmt(v) for v in est_b[t]] + [int(mask_a[t]), int(mask_b[t]),
                                                             "+".join(status) or "ok"])

    mse_a = mse_b = gain = None
    if deg_a < 0 and deg_b < 0:
        mse_a = float(np.mean(np.sum((outputs[0] - est_a) ** 2, axis=1)))
        mse_b = float(np.mean(np.sum((outputs[0] - est_b) ** 2, axis=1)))
        if mse_b > 0:
            # schedule_b is the reference
            gain = relative_gain(mse_b, mse_a)
    summary = {
        "command": "trace",
        "config": _config_echo(config),
        "schedule_a": schedule_a.to_text(),
        "schedule_b": schedule_b.to_text(),
        "mse_a": mse_a,
        "mse_b": mse_b,
        "gain": gain,
        "degenerate_at_a": deg_a if deg_a >= 0 else None,
        "degenerate_at_b": deg_b if deg_b >= 0 else None,
    }
    _write_summary(out, "trace_summary.json", summary)
    return summary


# -- gain ----------------------------------------------------------------------

def gain_histogram(gains: np.ndarray, bins: int, lo: float, hi: float):
    """Equal-width histogram over [lo, hi]; gains outside fall into the end bins."""
    edges = np.linspace(lo, hi, bins + 1)
    counts, _ = np.histogram(np.clip(gains, lo, hi), bins=edges)
    return edges, counts


def cmd_gain(
    config: ExperimentConfig,
    schedule_opt: MeasurementSchedule,
    schedule_ref: MeasurementSchedule,
    *,
    system: Optional[DynamicalSystem] = None,
) -> dict[str, Any]:
    """Paired per-draw relative gain of ``schedule_opt`` over ``schedule_ref``.

    ``system`` replaces the one named in the config, for library callers
    with their own models.
    """
    _check(schedule_opt, config, "optimised")
    _check(schedule_ref, config, "reference")
    out = _out_dir(config)
    seed = _random.child(config.seed, GAIN)
    with worker_map(config.workers) as map_fn:
        mse = _run_draws(config, [schedule_opt, schedule_ref], config.gain_draws, seed, map_fn, system)
    mse_opt, mse_ref = mse[:, 0], mse[:, 1]

    degenerate = np.isnan(mse_opt) | np.isnan(mse_ref)
    undefined = ~degenerate & (mse_ref <= 0)
    valid = ~degenerate & ~undefined
    gains = np.full(mse.shape[0], np.nan)
    gains[valid] = (mse_ref[valid] - mse_opt[valid]) / mse_ref[valid]

    with open(out / "gain_draws.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["draw", "mse_opt", "mse_ref", "gain", "status"])
        for k in range(mse.shape[0]):
            status = "degenerate" if degenerate[k] else "undefined" if undefined[k] else "ok"
            writer.writerow([k, _fmt(mse_opt[k]), _fmt(mse_ref[k]), _fmt(gains[k]), status])

    lo, hi = config.histogram_range
    edges, counts = gain_histogram(gains[valid], config.histogram_bins, lo, hi)
    with open(out / "gain_histogram.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["bin_left", "bin_right", "count"])
        for left, right, c in zip(edges[:-1], edges[1:], counts):
            writer.writerow([_fmt(left), _fmt(right), int(c)])

    n_valid = int(valid.sum())
    summary = {
        "command": "gain",
        "config": _config_echo(config),
        "schedule_opt": schedule_opt.to_text(),
        "schedule_ref": schedule_ref.to_text(),
        "draws": int(mse.shape[0]),
        "valid_draws": n_valid,
        "degenerate_draws": int(degenerate.sum()),
        "undefined_draws": int(undefined.sum()),
        "excluded_policy": "draws where either filter degenerated are excluded from gain statistics",
        "mean_gain": float(np.mean(gains[valid])) if n_valid else None,
        "median_gain": float(np.median(gains[valid])) if n_valid else None,
        "fraction_positive": float(np.mean(gains[valid] > 0)) if n_valid else None,
        "mean_mse_opt": float(np.mean(mse_opt[valid])) if n_valid else None,
        "mean_mse_ref": float(np.mean(mse_ref[valid])) if n_valid else None,
    }
    _write_summary(out, "gain_summary.json", summary)
    return summary


# -- evaluate ------------------------------------------------------------------

def cmd_evaluate(config: ExperimentConfig, schedule: MeasurementSchedule) -> dict[str, Any]:
    """Monte Carlo cost of a single schedule with ``config.draws`` draws."""
    _check(schedule, config, "evaluated")
    out = _out_dir(config)
    seed = _random.child(config.seed, EVALUATE)
    with worker_map(config.workers) as map_fn:
        mse = _run_draws(config, [schedule], config.draws, seed, map_fn)[:, 0]
    with open(out / "evaluate_draws.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["draw", "mse", "status"])
        for k, v in enumerate(mse):
            writer.writerow([k, _fmt(v), "degenerate" if np.isnan(v) else "ok"])
    estimate = summarize(mse)
    summary = {
        "command": "evaluate",
        "config": _config_echo(config),
        "schedule": schedule.to_text(),
        "cost": estimate.value,
        "standard_error": estimate.standard_error,
        "draws": estimate.draws,
        "degenerate_draws": estimate.degenerate_draws,
    }
    _write_summary(out, "evaluate_summary.json", summary)
    return summary

