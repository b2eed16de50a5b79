"""Order-preserving worker pool.

Results always come back in input order regardless of the thread count,
so callers that reduce in ascending index order stay deterministic under
any parallelism setting.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

ENV_THREADS = "MPSUQ_THREADS"


def resolve_threads(threads: int | None) -> int:
    """CLI flag wins; falls back to the MPSUQ_THREADS env var, then 1."""
    if threads is not None:
        value = threads
    else:
        value = int(os.environ.get(ENV_THREADS, "1"))
    if value < 1:
        raise ValueError(f"thread count must be >= 1, got {value}")
    return value


def parallel_map(fn, items, threads: int = 1) -> list:
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
