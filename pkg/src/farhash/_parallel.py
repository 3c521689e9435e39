"""Query-parallel execution over contiguous chunks of the query set."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

T = TypeVar("T")

THREADS_ENV = "FARHASH_THREADS"


def resolve_workers(workers: int | None) -> int:
    """Worker count: explicit value, else ``FARHASH_THREADS``, else CPU count."""
    if workers is None:
        env = os.environ.get(THREADS_ENV)
        if env:
            try:
                workers = int(env)
            except ValueError:
                raise ValueError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
        else:
            workers = os.cpu_count() or 1
    if workers < 1:
        raise ValueError("worker count must be positive")
    return workers


def map_chunks(
    fn: Callable[[int, int], list[T]],
    total: int,
    workers: int | None = None,
    chunk_size: int = 4096,
) -> list[T]:
    """Run ``fn(start, stop)`` over ``[0, total)`` in chunks and concatenate.

    Output order never depends on the worker count.
    """
    bounds = [(s, min(s + chunk_size, total)) for s in range(0, total, chunk_size)]
    n = resolve_workers(workers)
    if n == 1 or len(bounds) <= 1:
        parts = [fn(a, b) for a, b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=n) as pool:
            parts = list(pool.map(lambda ab: fn(*ab), bounds))
    out: list[T] = []
    for part in parts:
        out.extend(part)
    return out
