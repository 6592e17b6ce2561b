import numpy as np
import pytest

from ipfsched import _random
from ipfsched.estimator import (
    GainSample,
    MonteCarloCost,
    UnevaluableScheduleError,
    estimate_expected_mse,
    evaluate_draws,
    relative_gain,
    trajectory_mse,
)
from ipfsched.filtering import run_filter
from ipfsched.model import BenchmarkSystem, LinearGaussianSystem, simulate
from ipfsched.schedule import MeasurementSchedule, regular_schedule

BENCH = BenchmarkSystem(60)
REG = regular_schedule(60, 21)


def test_mse_of_identical_sequences_is_zero():
    z = np.random.default_rng(0).normal(size=(61, 2))
    assert trajectory_mse(z, z) == 0.0


def test_mse_hand_value():
    assert trajectory_mse([[0.0], [0.0]], [[1.0], [2.0]]) == pytest.approx(2.5)


def test_mse_scales_quadratically():
    rng = np.random.default_rng(1)
    z, zhat = rng.normal(size=(2, 30, 1))
    assert trajectory_mse(3.0 * z, 3.0 * zhat) == pytest.approx(9.0 * trajectory_mse(z, zhat))


def test_mse_length_mismatch():
    with pytest.raises(ValueError):
        trajectory_mse(np.zeros(3), np.zeros(4))


def test_noise_free_full_schedule_costs_nothing():
    lgs = LinearGaussianSystem(horizon=20, a=0.9, c=1.0, q=0.0, r=0.0, initial_mean=1.0, initial_variance=0.0)
    est = estimate_expected_mse(lgs, MeasurementSchedule.full(20), 10, 30, 0)
    assert est.value == 0.0
    assert est.degenerate_draws == 0


def test_estimate_deterministic():
    a = estimate_expected_mse(BENCH, REG, 30, 50, 5)
    b = estimate_expected_mse(BENCH, REG, 30, 50, 5)
    assert a.value == b.value
    np.testing.assert_array_equal(a.per_draw_mse, b.per_draw_mse)


def test_value_is_mean_of_per_draw_mse():
    est = estimate_expected_mse(BENCH, REG, 64, 50, 3)
    assert est.draws == 64
    assert abs(est.value - est.valid_mse.mean()) < 1e-12
    assert np.all(est.valid_mse >= 0)


def test_draws_match_single_filter_runs():
    # each Monte Carlo draw equals a stand-alone simulate + run_filter with the same streams
    seed = 17
    est = estimate_expected_mse(BENCH, REG, 5, 40, seed)
    for k in range(5):
        traj = simulate(BENCH, REG, _random.rng_for(seed, _random.TRAJECTORY, k))
        res = run_filter(BENCH, REG, traj.observations, 40, _random.rng_for(seed, _random.FILTER, k))
        assert est.per_draw_mse[k] == pytest.approx(trajectory_mse(traj.outputs, res.estimates), rel=1e-12)


def test_batching_does_not_change_draws():
    full = evaluate_draws(BENCH, [REG], range(120), 30, 2)
    tail = evaluate_draws(BENCH, [REG], range(100, 120), 30, 2)
    np.testing.assert_array_equal(full[100:], tail)


def test_full_schedule_beats_empty_on_linear_system():
    lgs = LinearGaussianSystem(horizon=30, a=0.9, c=1.0, q=1.0, r=1.0)
    for seed in range(20):
        full = estimate_expected_mse(lgs, MeasurementSchedule.full(30), 20, 100, seed).value
        empty = estimate_expected_mse(lgs, MeasurementSchedule(30), 20, 100, seed).value
        assert full <= empty


def test_every_draw_degenerate_is_unevaluable():
    # exact observations (r = 0) of a noisy state: no particle ever matches
    lgs = LinearGaussianSystem(horizon=5, q=1.0, r=0.0)
    with pytest.raises(UnevaluableScheduleError):
        estimate_expected_mse(lgs, MeasurementSchedule(5, [2]), 4, 10, 0)


def test_bad_counts():
    with pytest.raises(ValueError):
        estimate_expected_mse(BENCH, REG, 0, 10, 0)
    with pytest.raises(ValueError):
        estimate_expected_mse(BENCH, REG, 10, 0, 0)


def test_common_random_numbers():
    cost = MonteCarloCost(BENCH, 10, 30, common_seed=4)
    assert cost(REG, 1).value == cost(REG, 2).value
    plain = MonteCarloCost(BENCH, 10, 30)
    assert plain(REG, 1).value != plain(REG, 2).value


def test_relative_gain_values():
    assert relative_gain(3.0, 3.0) == 0.0
    assert relative_gain(2.0, 1.0) == pytest.approx(0.5)
    assert GainSample(4.0, 1.0).gain == pytest.approx(0.75)
    assert relative_gain(1.0, 0.0) <= 1.0
    with pytest.raises(ValueError):
        relative_gain(0.0, 1.0)
