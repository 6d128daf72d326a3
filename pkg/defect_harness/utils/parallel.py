from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")

logger = logging.getLogger(__name__)

_threads = 1


def set_threads(n: int) -> None:
    global _threads
    _threads = max(1, int(n))


def get_threads() -> int:
    return _threads


def ordered_map(fn: Callable[[T], R], items: Iterable[T], threads: int | None = None) -> list[R]:
    """fn over items, results in input order; serial when one thread is configured."""
    items = list(items)
    n = get_threads() if threads is None else max(1, int(threads))
    if n == 1 or len(items) < 2:
        return [fn(item) for item in items]
    logger.debug("mapping %d items on %d threads", len(items), n)
    with ThreadPoolExecutor(max_workers=min(n, len(items))) as pool:
        return list(pool.map(fn, items))
