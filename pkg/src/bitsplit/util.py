"""Small shared helpers: deterministic parallel map and integer math."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

THREADS_ENV = "AUTOSPLIT_THREADS"


def worker_count() -> int:
    """Worker cap from the environment; at least 1."""
    raw = os.environ.get(THREADS_ENV, "")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n < 1:
        n = min(8, os.cpu_count() or 1)
    return n


def parallel_map(fn, items):
    """Map fn over items, possibly in threads; results in input order.

    Output is independent of the worker count: items are independent and
    results are collected positionally.
    """
    items = list(items)
    n = worker_count()
    if n <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def prod(xs) -> int:
    out = 1
    for x in xs:
        out *= int(x)
    return out
