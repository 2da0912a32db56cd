"""Wall-clock and memory accounting for pipeline runs and their stages."""
from __future__ import annotations

import logging
import os
import time
import tracemalloc
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Dict, Iterator, Optional

try:
    import psutil
except ImportError:
    psutil = None  # type: ignore

logger = logging.getLogger(__name__)

MB = 1024.0 * 1024.0


@dataclass
class ResourceUsage:
    seconds: float = 0.0
    rss_mb: Optional[float] = None
    traced_peak_mb: Optional[float] = None

    def to_dict(self) -> Dict[str, Optional[float]]:
        return {"seconds": self.seconds, "rss_mb": self.rss_mb, "traced_peak_mb": self.traced_peak_mb}


class PerformanceTracker:
    """Measures one named operation.

    RSS needs psutil; the allocation peak needs ``trace_allocations`` and is
    only taken when no outer tracker already owns tracemalloc.
    """

    def __init__(self, name: str, trace_allocations: bool = False):
        self.name = name
        self.trace_allocations = trace_allocations
        self.usage = ResourceUsage()
        self._t0: Optional[float] = None
        self._tracing = False

    def start(self) -> None:
        if self.trace_allocations and not tracemalloc.is_tracing():
            tracemalloc.start()
            self._tracing = True
        self._t0 = time.perf_counter()

    def stop(self) -> ResourceUsage:
        if self._t0 is None:
            raise RuntimeError(f"tracker {self.name!r} was never started")
        self.usage.seconds = time.perf_counter() - self._t0
        if psutil is not None:
            self.usage.rss_mb = psutil.Process(os.getpid()).memory_info().rss / MB
        if self._tracing:
            self.usage.traced_peak_mb = tracemalloc.get_traced_memory()[1] / MB
            tracemalloc.stop()
            self._tracing = False
        logger.debug(f"{self.name}: {self.usage.seconds:.3f}s")
        return self.usage


@contextmanager
def performance_monitor(name: str, trace_allocations: bool = False) -> Iterator[PerformanceTracker]:
    tracker = PerformanceTracker(name, trace_allocations)
    tracker.start()
    try:
        yield tracker
    finally:
        tracker.stop()


class StageTimings:
    """Seconds per named pipeline stage; repeated stages accumulate."""

    def __init__(self) -> None:
        self.seconds: Dict[str, float] = {}

    @contextmanager
    def stage(self, name: str) -> Iterator[PerformanceTracker]:
        with performance_monitor(name) as tracker:
            yield tracker
        self.seconds[name] = self.seconds.get(name, 0.0) + tracker.usage.seconds

    def to_dict(self) -> Dict[str, float]:
        return dict(self.seconds)
