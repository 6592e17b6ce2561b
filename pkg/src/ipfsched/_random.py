"""Counter-based seed derivation.

Every random stream in the package is a child of a root ``SeedSequence``
addressed by a tuple of integer keys, so a draw's noise depends only on
(root seed, keys) and never on scheduling or worker count.
"""

from __future__ import annotations

from typing import Union

import numpy as np

SeedLike = Union[int, np.random.SeedSequence, np.random.Generator, None]

# stream tags
TRAJECTORY = 0
FILTER = 1
GENETIC = 2
EVALUATION = 3
RANDOM_TRIALS = 4


def as_seed_sequence(seed: SeedLike) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, np.random.Generator):
        return np.random.SeedSequence(int(seed.integers(2**63)))
    return np.random.SeedSequence(seed)


def child(seed: SeedLike, *keys: int) -> np.random.SeedSequence:
    root = as_seed_sequence(seed)
    return np.random.SeedSequence(
        entropy=root.entropy,
        spawn_key=tuple(root.spawn_key) + tuple(int(k) for k in keys),
    )


def rng_for(seed: SeedLike, *keys: int) -> np.random.Generator:
    return np.random.default_rng(child(seed, *keys))
