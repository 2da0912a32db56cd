from __future__ import annotations

import tracemalloc

import pytest

from gyroburst.core.monitoring import PerformanceTracker, StageTimings, performance_monitor


def test_monitor_records_time_and_allocations():
    with performance_monitor("alloc", trace_allocations=True) as tracker:
        block = [0.0] * 200_000
    del block
    assert tracker.usage.seconds >= 0.0
    assert tracker.usage.traced_peak_mb is not None and tracker.usage.traced_peak_mb > 0.5
    assert not tracemalloc.is_tracing()


def test_stop_without_start_raises():
    with pytest.raises(RuntimeError):
        PerformanceTracker("idle").stop()


def test_repeated_stages_accumulate():
    timings = StageTimings()
    for _ in range(3):
        with timings.stage("align"):
            pass
    with timings.stage("merge"):
        pass
    seconds = timings.to_dict()
    assert set(seconds) == {"align", "merge"}
    assert all(v >= 0.0 for v in seconds.values())
