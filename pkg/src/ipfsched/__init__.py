"""Choosing measurement times for particle filtering under a measurement budget."""

from ipfsched.estimator import (
    CostEstimate,
    MonteCarloCost,
    UnevaluableScheduleError,
    estimate_expected_mse,
    relative_gain,
    trajectory_mse,
)
from ipfsched.filtering import FilterResult, run_filter, run_kalman_oracle, systematic_resample
from ipfsched.model import BenchmarkSystem, DynamicalSystem, LinearGaussianSystem, Trajectory, simulate
from ipfsched.optimizer import (
    GaParams,
    OptimizationResult,
    PopulationExtinctError,
    optimize_ga,
    optimize_random_trials,
)
from ipfsched.schedule import MeasurementSchedule, decode, encode, random_schedule, regular_schedule

__version__ = "0.1.0"
