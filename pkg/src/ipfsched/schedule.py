"""Measurement schedules: sets of time indices in ``{0, ..., T}``.

A schedule has two views.  :class:`MeasurementSchedule` is the sorted set
of times; the genetic algorithm works on the bit view, a boolean array of
length ``T + 1`` with bit ``t`` set iff ``t`` is measured.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np


@dataclass(frozen=True)
class MeasurementSchedule:
    horizon: int
    times: tuple[int, ...]

    def __init__(self, horizon: int, times: Iterable[int] = ()) -> None:
        times = tuple(int(t) for t in times)
        if horizon < 0:
            raise ValueError(f"horizon must be >= 0, got {horizon}")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError(f"times must be strictly increasing: {times}")
        if times and (times[0] < 0 or times[-1] > horizon):
            raise ValueError(f"times must lie in [0, {horizon}]: {times}")
        object.__setattr__(self, "horizon", int(horizon))
        object.__setattr__(self, "times", times)

    @classmethod
    def from_set(cls, horizon: int, times: Iterable[int]) -> "MeasurementSchedule":
        return cls(horizon, sorted(set(int(t) for t in times)))

    @classmethod
    def full(cls, horizon: int) -> "MeasurementSchedule":
        return cls(horizon, range(horizon + 1))

    def cardinality(self) -> int:
        return len(self.times)

    def __len__(self) -> int:
        return len(self.times)

    def __iter__(self) -> Iterator[int]:
        return iter(self.times)

    def __contains__(self, t: object) -> bool:
        return t in self._as_set

    @property
    def _as_set(self) -> frozenset[int]:
        return frozenset(self.times)

    def mask(self) -> np.ndarray:
        return encode(self)

    def to_text(self) -> str:
        return ",".join(str(t) for t in self.times)

    @classmethod
    def from_text(cls, horizon: int, text: str) -> "MeasurementSchedule":
        text = text.strip()
        if not text:
            return cls(horizon)
        return cls(horizon, (int(tok) for tok in text.split(",")))

    def __str__(self) -> str:
        return self.to_text()


def encode(schedule: MeasurementSchedule) -> np.ndarray:
    bits = np.zeros(schedule.horizon + 1, dtype=bool)
    bits[list(schedule.times)] = True
    return bits


def decode(bits) -> MeasurementSchedule:
    bits = np.asarray(bits, dtype=bool)
    if bits.ndim != 1 or bits.size == 0:
        raise ValueError("bits must be a non-empty 1-d array")
    return MeasurementSchedule(bits.size - 1, np.flatnonzero(bits))


def bits_to_str(bits) -> str:
    return "".join("1" if b else "0" for b in np.asarray(bits, dtype=bool))


def bits_from_str(text: str) -> np.ndarray:
    return np.array([c == "1" for c in text.strip()], dtype=bool)


def regular_schedule(T: int, N: int) -> MeasurementSchedule:
    """Equally spaced times ``Round[k T / (N-1)]`` for ``k = 0 .. N-1``.

    Halves round away from zero.  A rounding collision that would leave
    fewer than ``N`` distinct times is an error.
    """
    if N < 2:
        raise ValueError(f"regular schedule needs N >= 2, got {N}")
    if N > T + 1:
        raise ValueError(f"N = {N} exceeds the {T + 1} available time steps")
    # floor(kT/(N-1) + 1/2) in exact integer arithmetic
    times = [(2 * k * T + (N - 1)) // (2 * (N - 1)) for k in range(N)]
    if len(set(times)) != N:
        raise ValueError(f"rounding collision: regular_schedule({T}, {N}) has duplicate times")
    return MeasurementSchedule(T, times)


def random_schedule(T: int, N: int, rng: np.random.Generator) -> MeasurementSchedule:
    """Uniform draw over all N-subsets of ``{0, ..., T}``."""
    if not 0 <= N <= T + 1:
        raise ValueError(f"N = {N} not in [0, {T + 1}]")
    return MeasurementSchedule(T, np.sort(rng.choice(T + 1, size=N, replace=False)))


def random_bits(T: int, N: int, rng: np.random.Generator) -> np.ndarray:
    bits = np.zeros(T + 1, dtype=bool)
    bits[rng.choice(T + 1, size=N, replace=False)] = True
    return bits


def parse_schedule(text: str, T: int, N: int | None = None) -> MeasurementSchedule:
    """Parse a CLI schedule argument.

    Accepts ``regular`` (needs ``N``), ``@path`` to read a file holding a
    comma-separated list, or a comma-separated list itself.
    """
    text = text.strip()
    if text == "regular":
        if N is None:
            raise ValueError("'regular' needs a measurement budget N")
        return regular_schedule(T, N)
    if text.startswith("@"):
        with open(text[1:], encoding="utf-8") as fh:
            text = fh.read()
    return MeasurementSchedule.from_text(T, text)
