import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from ipfsched.filtering import (
    draw_filter_noise,
    filter_batch,
    normalise_log_weights,
    run_filter,
    run_kalman_oracle,
    systematic_resample,
)
from ipfsched.model import BenchmarkSystem, LinearGaussianSystem, simulate
from ipfsched.schedule import MeasurementSchedule, regular_schedule

LGS = LinearGaussianSystem(horizon=60, a=0.9, c=1.0, q=1.0, r=1.0, initial_mean=0.0, initial_variance=1.0)


def _counts(idx, P):
    return np.bincount(idx, minlength=P)


@pytest.mark.parametrize(
    "weights, expected",
    [
        ([1.0, 0.0, 0.0], [3, 0, 0]),
        ([0.25] * 4, [1, 1, 1, 1]),
        ([0.5, 0.25, 0.25, 0.0], [2, 1, 1, 0]),
    ],
)
def test_systematic_resample_examples(weights, expected):
    for u in (0.0, 0.3, 0.999):
        np.testing.assert_array_equal(_counts(systematic_resample(weights, u), len(weights)), expected)


def test_systematic_resample_rejects_unnormalised():
    with pytest.raises(ValueError):
        systematic_resample([0.5, 0.2], np.random.default_rng(0))


@settings(max_examples=1000, deadline=None)
@given(
    hnp.arrays(np.float64, st.integers(1, 40), elements=st.floats(0, 1e3)),
    st.floats(0, 1, exclude_max=True),
)
def test_systematic_quota(raw, u):
    if raw.sum() <= 0:
        return
    weights = raw / raw.sum()
    P = weights.size
    counts = _counts(systematic_resample(weights, u), P)
    quota = P * weights
    assert counts.sum() == P
    assert np.all(counts >= np.floor(quota - 1e-9))
    assert np.all(counts <= np.ceil(quota + 1e-9))
    assert np.all(counts[weights == 0] == 0)


def test_batched_resampling_matches_single_rows():
    rng = np.random.default_rng(4)
    from ipfsched.filtering import _systematic_indices

    w = rng.random((7, 30)) ** 4
    w /= w.sum(axis=1, keepdims=True)
    u = rng.random(7)
    batched = _systematic_indices(w, u)
    for b in range(7):
        np.testing.assert_array_equal(batched[b], _systematic_indices(w[b:b + 1], u[b:b + 1])[0])


# -- Kalman oracle --------------------------------------------------------------

def test_kalman_noise_free_recovers_truth():
    lgs = LinearGaussianSystem(horizon=10, a=0.8, c=2.0, q=0.0, r=0.0, initial_mean=1.5, initial_variance=0.0)
    sched = MeasurementSchedule.full(10)
    traj = simulate(lgs, sched, np.random.default_rng(0))
    res = run_kalman_oracle(lgs, sched, traj.observations)
    np.testing.assert_allclose(res.estimates, traj.states)


def test_kalman_empty_schedule_is_prior_mean():
    lgs = LinearGaussianSystem(horizon=12, a=0.7, c=3.0, q=0.5, r=1.0, initial_mean=2.0, initial_variance=1.0)
    res = run_kalman_oracle(lgs, MeasurementSchedule(12), {})
    np.testing.assert_allclose(res.estimates[:, 0], 2.0 * 0.7 ** np.arange(13))


def test_kalman_tiny_noise_tracks_observations():
    lgs = LinearGaussianSystem(horizon=20, a=0.9, c=2.0, q=1.0, r=1e-12)
    sched = MeasurementSchedule.full(20)
    traj = simulate(lgs, sched, np.random.default_rng(1))
    res = run_kalman_oracle(lgs, sched, traj.observations)
    for t, y in traj.observations.items():
        assert abs(res.estimates[t, 0] - y[0] / 2.0) < 1e-4


def test_kalman_matches_textbook_recursion():
    # independent batch computation: posterior mean of x(t) from the joint Gaussian
    lgs = LinearGaussianSystem(horizon=6, a=0.9, c=1.3, q=0.4, r=0.7, initial_mean=0.5, initial_variance=2.0)
    sched = MeasurementSchedule(6, [1, 2, 5])
    traj = simulate(lgs, sched, np.random.default_rng(2))
    T = 6
    mean = np.array([lgs.initial_mean * lgs.a**t for t in range(T + 1)])
    cov = np.empty((T + 1, T + 1))
    var = [lgs.initial_variance]
    for t in range(1, T + 1):
        var.append(lgs.a**2 * var[-1] + lgs.q)
    for s in range(T + 1):
        for t in range(T + 1):
            lo, hi = min(s, t), max(s, t)
            cov[s, t] = lgs.a ** (hi - lo) * var[lo]
    res = run_kalman_oracle(lgs, sched, traj.observations)
    for t in range(T + 1):
        used = [s for s in sched.times if s <= t]
        if not used:
            assert res.estimates[t, 0] == pytest.approx(mean[t])
            continue
        S = lgs.c**2 * cov[np.ix_(used, used)] + lgs.r * np.eye(len(used))
        k = lgs.c * cov[t, used]
        y = np.array([traj.observations[s][0] for s in used])
        post = mean[t] + k @ np.linalg.solve(S, y - lgs.c * mean[used])
        assert res.estimates[t, 0] == pytest.approx(post, abs=1e-10)


# -- particle filter ------------------------------------------------------------

def test_pf_empty_schedule_deterministic_prior():
    lgs = LinearGaussianSystem(horizon=15, a=1.0, c=1.0, q=0.0, r=1.0, initial_mean=3.0, initial_variance=0.0)
    res = run_filter(lgs, MeasurementSchedule(15), {}, 50, np.random.default_rng(0))
    assert not res.degenerate
    np.testing.assert_array_equal(res.estimates[:, 0], np.full(16, 3.0))


def test_pf_empty_schedule_bit_identical_reruns():
    sched = MeasurementSchedule(60)
    a = run_filter(BenchmarkSystem(60), sched, {}, 200, np.random.default_rng(8))
    b = run_filter(BenchmarkSystem(60), sched, {}, 200, np.random.default_rng(8))
    np.testing.assert_array_equal(a.estimates, b.estimates)


def test_pf_empty_schedule_is_open_loop_mean():
    bench = BenchmarkSystem(60)
    noise = draw_filter_noise(bench, 300, np.random.default_rng(2))
    x = noise.initial
    expected = [x.mean()]
    for t in range(60):
        x = bench.step(t, x, noise.process[t])
        expected.append(x.mean())
    est, _ = filter_batch(bench, MeasurementSchedule(60), np.zeros((1, 61, 1)), [noise])
    np.testing.assert_allclose(est[0, :, 0], expected, rtol=1e-12, atol=1e-12)


def test_pf_far_observation_degenerates():
    bench = BenchmarkSystem(60)
    sched = MeasurementSchedule(60, [17])
    res = run_filter(bench, sched, {17: np.array([1e9])}, 100, np.random.default_rng(0))
    assert res.degenerate_at == 17
    assert res.estimates.shape == (17, 1)


@settings(max_examples=500, deadline=None)
@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 60)),
                  elements=st.floats(-2000, 50)))
def test_weights_normalised(loglik):
    weights, raw_sum = normalise_log_weights(loglik)
    assert np.all(weights >= 0)
    np.testing.assert_allclose(weights.sum(axis=1), 1.0, rtol=0, atol=1e-12)
    assert np.all((raw_sum == 0) == np.all(np.exp(loglik) == 0, axis=1))


def test_single_particle_estimate_is_the_particle():
    bench = BenchmarkSystem(10)
    traj = simulate(bench, MeasurementSchedule.full(10), np.random.default_rng(3))
    res = run_filter(bench, MeasurementSchedule.full(10), traj.observations, 1, np.random.default_rng(3))
    noise = draw_filter_noise(bench, 1, np.random.default_rng(3))
    x = noise.initial
    for t in range(11):
        if t:
            x = bench.step(t - 1, x, noise.process[t - 1])
        assert res.estimates[t, 0] == pytest.approx(x[0, 0])


def test_pf_requires_matching_observations():
    with pytest.raises(ValueError):
        run_filter(LGS, MeasurementSchedule(60, [1, 2]), {1: np.array([0.0])}, 10, np.random.default_rng(0))


def test_pf_deterministic():
    bench = BenchmarkSystem(60)
    sched = regular_schedule(60, 21)
    traj = simulate(bench, sched, np.random.default_rng(11))
    a = run_filter(bench, sched, traj.observations, 100, np.random.default_rng(5))
    b = run_filter(bench, sched, traj.observations, 100, np.random.default_rng(5))
    np.testing.assert_array_equal(a.estimates, b.estimates)


def test_pf_noise_free_linear_exact():
    lgs = LinearGaussianSystem(horizon=10, a=0.9, c=1.0, q=0.0, r=0.0, initial_mean=2.0, initial_variance=0.0)
    sched = MeasurementSchedule.full(10)
    traj = simulate(lgs, sched, np.random.default_rng(0))
    res = run_filter(lgs, sched, traj.observations, 20, np.random.default_rng(0))
    np.testing.assert_array_equal(res.estimates, traj.states)


def test_pf_close_to_kalman_small():
    # cheap version of the acceptance check, looser tolerance, few seeds
    sched = regular_schedule(60, 21)
    traj = simulate(LGS, sched, np.random.default_rng(0))
    kf = run_kalman_oracle(LGS, sched, traj.observations)
    pf = run_filter(LGS, sched, traj.observations, 5000, np.random.default_rng(1))
    dev = np.mean((pf.estimates - kf.estimates) ** 2)
    assert dev < (0.1 * np.mean(np.sqrt(kf.variances))) ** 2
