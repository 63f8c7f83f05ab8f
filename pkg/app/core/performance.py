#!/usr/bin/env python3
"""
SpecLab Performance Monitoring Module

Version: 1.0.0
Author: SpecLab Development Team
Description: Wall-clock and memory measurements for epochs and matrix cells
License: [To be determined]

Timings are kept out of the CSV summary and the chart: those files must be
byte-identical across reruns, durations never are.
"""

import time
from collections.abc import Iterator
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any

import psutil

from .logging import logger


@dataclass
class PerformanceMetric:
    """One measured span"""

    name: str
    duration_s: float
    rss_mb: float
    labels: dict[str, Any] = field(default_factory=dict)


class PerformanceMonitor:
    """Performance monitoring for training runs and sweeps"""

    def __init__(self):
        """Initialize performance monitor"""
        self.metrics: list[PerformanceMetric] = []
        self._process = psutil.Process()

    def _rss_mb(self) -> float:
        return self._process.memory_info().rss / (1024 * 1024)

    @contextmanager
    def measure(self, name: str, **labels: Any) -> Iterator[None]:
        """Measure the wrapped block and record a metric"""
        start = time.perf_counter()
        try:
            yield
        finally:
            metric = PerformanceMetric(
                name=name,
                duration_s=time.perf_counter() - start,
                rss_mb=self._rss_mb(),
                labels=dict(labels),
            )
            self.metrics.append(metric)
            logger.debug(
                "Performance metric",
                metric_name=name,
                duration_s=round(metric.duration_s, 4),
                rss_mb=round(metric.rss_mb, 1),
                **labels,
            )

    def summary(self) -> dict[str, dict[str, float]]:
        """Aggregate recorded spans by name"""
        summary: dict[str, dict[str, float]] = {}
        for metric in self.metrics:
            entry = summary.setdefault(
                metric.name, {"count": 0, "total_s": 0.0, "max_rss_mb": 0.0}
            )
            entry["count"] += 1
            entry["total_s"] += metric.duration_s
            entry["max_rss_mb"] = max(entry["max_rss_mb"], metric.rss_mb)
        return summary

    def reset(self):
        """Drop recorded metrics"""
        self.metrics.clear()


# Global performance monitor instance
performance_monitor = PerformanceMonitor()


def get_performance_monitor() -> PerformanceMonitor:
    """Get performance monitor instance"""
    return performance_monitor
