"""Search for the best N-subset of measurement times.

Two optimizers share one interface: a cost oracle ``(schedule, seed) ->
CostEstimate`` and a seed.  :func:`optimize_ga` is a generational genetic
algorithm over (T+1)-bit genomes of fixed weight N; :func:`optimize_random_trials`
is the baseline that scores uniformly random schedules.

Cost evaluations go through ``map_fn`` (``map`` by default) so a caller can
hand in an ordered parallel map; evaluation seeds are derived from the
individual's position, never from completion order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from ipfsched import _random
from ipfsched.estimator import CostEstimate, UnevaluableScheduleError
from ipfsched.schedule import MeasurementSchedule, decode, random_bits

log = logging.getLogger(__name__)

CostOracle = Callable[[MeasurementSchedule, np.random.SeedSequence], CostEstimate]
MapFn = Callable[..., Iterable]


class PopulationExtinctError(RuntimeError):
    def __init__(self, generation: int) -> None:
        super().__init__(f"population extinct in generation {generation}")
        self.generation = generation


@dataclass(frozen=True)
class GaParams:
    population_size: int = 50
    generations: int = 25
    crossover_probability: float = 1.0
    mutation_probability_per_gene: float = 0.003
    sigma_coefficient: float = 1.0

    def __post_init__(self) -> None:
        if self.population_size < 2 or self.population_size % 2:
            raise ValueError("population_size must be a positive even number")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        for name in ("crossover_probability", "mutation_probability_per_gene"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")
        if not self.sigma_coefficient > 0:
            raise ValueError("sigma_coefficient must be positive")


@dataclass
class GenerationRecord:
    min_cost: float
    mean_cost: float
    evaluations: int
    killed: int = 0


@dataclass
class GaState:
    generation: int
    individuals: np.ndarray  # (population, T+1) bool
    costs: np.ndarray  # NaN for killed individuals
    alive: np.ndarray
    history: list[GenerationRecord] = field(default_factory=list)


@dataclass
class OptimizationResult:
    best_schedule: MeasurementSchedule
    best_cost: float
    history: list[GenerationRecord]
    evaluations_used: int
    final_state: Optional[GaState] = None


# -- genetic operators ------------------------------------------------------

def sigma_scale(costs, sigma_coefficient: float = 1.0) -> np.ndarray:
    """Expected offspring counts from costs by sigma scaling.

    Costs are negated into fitness (we minimise).  NaN marks a killed
    individual and maps to 0.  Live individuals get
    ``max(0.1, 1 + (f - mean) / (c * std))`` with the population standard
    deviation of the live fitnesses, or 1 when that deviation is 0.
    """
    costs = np.asarray(costs, dtype=float)
    live = ~np.isnan(costs)
    if not live.any():
        raise ValueError("sigma scaling needs at least one live individual")
    fitness = -costs[live]
    std = fitness.std()
    expected = np.zeros(costs.shape)
    if std == 0.0:
        expected[live] = 1.0
    else:
        expected[live] = np.maximum(0.1, 1.0 + (fitness - fitness.mean()) / (sigma_coefficient * std))
    return expected


def sus_select(expected_values, count: int, rng: np.random.Generator) -> np.ndarray:
    """Stochastic universal sampling: one spin, ``count`` evenly spaced pointers."""
    expected_values = np.asarray(expected_values, dtype=float)
    if np.any(expected_values < 0):
        raise ValueError("expected values must be nonnegative")
    total = expected_values.sum()
    if not total > 0:
        raise ValueError("selection pool is empty (all expected values are zero)")
    cum = np.cumsum(expected_values / total)
    cum /= cum[-1]
    pointers = (rng.random() + np.arange(count)) / count
    idx = np.searchsorted(cum, pointers, side="right")
    return np.minimum(idx, len(cum) - 1)


def count_preserving_crossover(parent1, parent2, rng: np.random.Generator):
    """Recombine two equal-weight genomes into two children of the same weight.

    Shared genes are inherited by both children.  The positions set in
    exactly one parent are shuffled and split in half, one half per child.
    """
    parent1 = np.asarray(parent1, dtype=bool)
    parent2 = np.asarray(parent2, dtype=bool)
    if parent1.shape != parent2.shape:
        raise ValueError("parents must have the same length")
    if parent1.sum() != parent2.sum():
        raise ValueError("parents must have the same number of set bits")
    child1 = parent1 & parent2
    child2 = child1.copy()
    differ = np.flatnonzero(parent1 != parent2)
    differ = rng.permutation(differ)
    half = differ.size // 2
    child1[differ[:half]] = True
    child2[differ[half:]] = True
    return child1, child2


def mutate(individual, p_gene: float, rng: np.random.Generator, N: Optional[int] = None) -> np.ndarray:
    """Flip each gene with probability ``p_gene``, then repair the weight.

    Repair unsets (or sets) uniformly chosen bits until the weight is back
    to ``N``, which defaults to the weight of ``individual``.
    """
    bits = np.asarray(individual, dtype=bool).copy()
    if N is None:
        N = int(bits.sum())
    flips = rng.random(bits.size) < p_gene
    bits ^= flips
    excess = int(bits.sum()) - N
    if excess > 0:
        bits[rng.choice(np.flatnonzero(bits), size=excess, replace=False)] = False
    elif excess < 0:
        bits[rng.choice(np.flatnonzero(~bits), size=-excess, replace=False)] = True
    return bits


# -- evaluation ---------------------------------------------------------------

def _evaluate(cost: CostOracle, schedule: MeasurementSchedule, seed) -> Optional[CostEstimate]:
    try:
        return cost(schedule, seed)
    except UnevaluableScheduleError:
        return None


class _Evaluate:
    """Picklable ``(schedule, seed) -> CostEstimate | None`` wrapper."""

    def __init__(self, cost: CostOracle) -> None:
        self.cost = cost

    def __call__(self, schedule, seed):
        return _evaluate(self.cost, schedule, seed)


def _killed(estimate: Optional[CostEstimate]) -> bool:
    # any degenerate draw kills the individual, not only a fully degenerate one
    return estimate is None or estimate.has_degenerate


def optimize_ga(
    cost: CostOracle,
    T: int,
    N: int,
    params: GaParams,
    seed: _random.SeedLike,
    *,
    map_fn: MapFn = map,
) -> OptimizationResult:
    """Genetic algorithm returning the best live individual of the last generation.

    No elitism: the best-ever individual is not carried over, so the
    per-generation minimum need not decrease monotonically.
    """
    if not 0 <= N <= T + 1:
        raise ValueError(f"N = {N} not in [0, {T + 1}]")
    root = _random.as_seed_sequence(seed)
    rng = _random.rng_for(root, _random.GENETIC)
    pop = params.population_size
    evaluate = _Evaluate(cost)

    individuals = np.stack([random_bits(T, N, rng) for _ in range(pop)])
    state: Optional[GaState] = None
    history: list[GenerationRecord] = []
    for gen in range(params.generations):
        schedules = [decode(bits) for bits in individuals]
        seeds = [_random.child(root, _random.EVALUATION, gen, i) for i in range(pop)]
        estimates = list(map_fn(evaluate, schedules, seeds))
        alive = np.array([not _killed(e) for e in estimates])
        costs = np.array([e.value if ok else np.nan for e, ok in zip(estimates, alive)])
        if not alive.any():
            raise PopulationExtinctError(gen)
        history.append(
            GenerationRecord(
                min_cost=float(np.nanmin(costs)),
                mean_cost=float(np.nanmean(costs)),
                evaluations=(gen + 1) * pop,
                killed=int((~alive).sum()),
            )
        )
        log.debug("generation %d: min %.4g mean %.4g killed %d", gen, history[-1].min_cost,
                  history[-1].mean_cost, history[-1].killed)
        state = GaState(gen, individuals, costs, alive, history)
        if gen == params.generations - 1:
            break

        expected = sigma_scale(costs, params.sigma_coefficient)
        parents = sus_select(expected, pop, rng)
        # SUS returns parents in wheel order; shuffle before pairing neighbours
        parents = rng.permutation(parents)
        children = []
        for i in range(0, pop, 2):
            a, b = individuals[parents[i]], individuals[parents[i + 1]]
            if rng.random() < params.crossover_probability:
                a, b = count_preserving_crossover(a, b, rng)
            children.append(mutate(a, params.mutation_probability_per_gene, rng, N))
            children.append(mutate(b, params.mutation_probability_per_gene, rng, N))
        individuals = np.stack(children)

    best = int(np.nanargmin(state.costs))
    return OptimizationResult(
        best_schedule=decode(state.individuals[best]),
        best_cost=float(state.costs[best]),
        history=history,
        evaluations_used=pop * params.generations,
        final_state=state,
    )


def optimize_random_trials(
    cost: CostOracle,
    T: int,
    N: int,
    budget_evals: int,
    seed: _random.SeedLike,
    *,
    map_fn: MapFn = map,
) -> OptimizationResult:
    """Score ``budget_evals`` uniform random schedules and keep the cheapest.

    ``history[i]`` holds the running minimum and running mean after ``i + 1``
    evaluations.  Schedules whose estimate saw a degenerate draw are
    discarded, as the genetic algorithm would kill them.
    """
    if budget_evals < 1:
        raise ValueError("budget_evals must be >= 1")
    root = _random.as_seed_sequence(seed)
    rng = _random.rng_for(root, _random.RANDOM_TRIALS)
    schedules = [decode(random_bits(T, N, rng)) for _ in range(budget_evals)]
    seeds = [_random.child(root, _random.EVALUATION, i) for i in range(budget_evals)]
    estimates = list(map_fn(_Evaluate(cost), schedules, seeds))

    history: list[GenerationRecord] = []
    best_i, best_cost = -1, np.inf
    total, valid, killed = 0.0, 0, 0
    for i, est in enumerate(estimates):
        if _killed(est):
            killed += 1
        else:
            valid += 1
            total += est.value
            if est.value < best_cost:
                best_i, best_cost = i, est.value
        history.append(
            GenerationRecord(
                min_cost=float(best_cost) if valid else np.nan,
                mean_cost=total / valid if valid else np.nan,
                evaluations=i + 1,
                killed=killed,
            )
        )
    if best_i < 0:
        raise UnevaluableScheduleError("every random trial was unevaluable")
    return OptimizationResult(
        best_schedule=schedules[best_i],
        best_cost=float(best_cost),
        history=history,
        evaluations_used=budget_evals,
    )
