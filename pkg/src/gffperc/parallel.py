"""Order-preserving process pool used by every Monte Carlo loop."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable


def default_workers() -> int:
    env = os.environ.get("GFFPERC_WORKERS")
    return int(env) if env else 1


def parallel_map(fn: Callable, items: Iterable, workers: int | None = None, chunksize: int = 4) -> list:
    """``[fn(x) for x in items]``, optionally spread over processes.

    Results come back in input order, and each task seeds itself from its
    own index, so the output does not depend on ``workers``.
    """
    items = list(items)
    w = default_workers() if workers is None else workers
    if w <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=w) as pool:
        return list(pool.map(fn, items, chunksize=chunksize))
