# -*- coding: utf-8 -*-
"""
Stage timing instrumentation
"""

import time
from contextlib import contextmanager
from typing import Dict, Iterator


class StageTimer:
    """Accumulates wall time per named stage in milliseconds"""

    def __init__(self):
        self.timings: Dict[str, float] = {}
        self._start = time.perf_counter()

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            elapsed = (time.perf_counter() - start) * 1000.0
            self.timings[name] = self.timings.get(name, 0.0) + elapsed

    def elapsed_ms(self) -> float:
        return (time.perf_counter() - self._start) * 1000.0
