from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Iterator


@dataclass(slots=True)
class Stopwatch:
    start: float
    seconds: float = 0.0

    def lap(self) -> float:
        return time.perf_counter() - self.start


@contextmanager
def timed() -> Iterator[Stopwatch]:
    """Wall-clock stopwatch; `seconds` is set when the block exits."""
    watch = Stopwatch(start=time.perf_counter())
    try:
        yield watch
    finally:
        watch.seconds = time.perf_counter() - watch.start
