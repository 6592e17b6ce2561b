from __future__ import annotations

import contextlib
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterator


@contextlib.contextmanager
def worker_map(workers: int) -> Iterator[Callable]:
    """Yield an order-preserving ``map`` running on ``workers`` processes.

    With one worker this is the builtin ``map`` and no pool is started.
    """
    if workers <= 1:
        yield map
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield pool.map
