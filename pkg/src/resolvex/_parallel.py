"""Order-preserving parallel map over independent chunks."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")

_thread_override: int | None = None


def set_threads(n: int | None) -> None:
    global _thread_override
    _thread_override = None if n is None else max(1, int(n))


def thread_count() -> int:
    if _thread_override is not None:
        return _thread_override
    env = os.environ.get("RESOLVEX_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def pmap(func: Callable[[T], R], items: Iterable[T]) -> list[R]:
    """Apply ``func`` to every item; results come back in input order.

    Each task writes only its own return value, so results do not depend on
    the number of worker threads.
    """
    items = list(items)
    n = thread_count()
    if n == 1 or len(items) < 2:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(func, items))


def chunk_ranges(total: int, chunk: int) -> Sequence[tuple[int, int]]:
    return [(lo, min(lo + chunk, total)) for lo in range(0, total, chunk)]
