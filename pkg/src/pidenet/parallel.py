"""Thread-count knob and an order-preserving map used by the Monte Carlo loops."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")

_threads = os.cpu_count() or 1


def set_threads(n: int | None) -> None:
    global _threads
    _threads = max(1, int(n)) if n else (os.cpu_count() or 1)


def get_threads() -> int:
    return _threads


def map_ordered(fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
    """``list(map(fn, items))``, run on up to ``get_threads()`` threads.

    Results come back in input order so that any later reduction is
    independent of scheduling.
    """
    items = list(items)
    if _threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(_threads, len(items))) as pool:
        return list(pool.map(fn, items))


def fsum_rows(parts) -> float:
    """Compensated sum of a sequence of partial sums."""
    return math.fsum(float(p) for p in parts)
