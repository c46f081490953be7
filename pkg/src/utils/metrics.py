import threading
import time
from collections import Counter
from contextlib import contextmanager
from typing import Any, Dict, Iterator, List

import psutil

from src.core.interfaces import MetricsInterface

# ---------------------------------------------------
# Run Metrics Collection Component
# ---------------------------------------------------


class RunMetrics(MetricsInterface):
    """Stage timings, counters and peak RSS of one experiment run"""

    def __init__(self):
        self._lock = threading.Lock()
        self._process = psutil.Process()
        self._started = time.perf_counter()
        self._metrics = {
            "counters": Counter(),
            "stage_seconds": {},
            "stage_calls": Counter(),
        }
        self._peak_rss = 0
        self.sample_rss()

    def sample_rss(self) -> int:
        """Record the current resident set size and return it in bytes"""
        rss = self._process.memory_info().rss
        with self._lock:
            self._peak_rss = max(self._peak_rss, rss)
        return rss

    def record_stage(self, stage: str, seconds: float) -> None:
        with self._lock:
            self._metrics["stage_seconds"][stage] = self._metrics["stage_seconds"].get(stage, 0.0) + seconds
            self._metrics["stage_calls"][stage] += 1

    def increment(self, counter: str, amount: int = 1) -> None:
        with self._lock:
            self._metrics["counters"][counter] += amount

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        """Time a block as one call of ``name`` and sample RSS afterwards"""
        start = time.perf_counter()
        try:
            yield
        finally:
            self.record_stage(name, time.perf_counter() - start)
            self.sample_rss()

    def get_metrics(self) -> Dict[str, Any]:
        """Get current metrics"""
        with self._lock:
            return {
                "wall_clock_s": time.perf_counter() - self._started,
                "peak_rss_mb": self._peak_rss / 2**20,
                "stage_seconds": dict(self._metrics["stage_seconds"]),
                "stage_calls": dict(self._metrics["stage_calls"]),
                "counters": dict(self._metrics["counters"]),
            }

    def summary(self) -> Dict[str, float]:
        """Flat float summary attached to experiment results"""
        metrics = self.get_metrics()
        flat = {"wall_clock_s": metrics["wall_clock_s"], "peak_rss_mb": metrics["peak_rss_mb"]}
        flat.update({f"stage.{k}_s": v for k, v in metrics["stage_seconds"].items()})
        flat.update({f"count.{k}": float(v) for k, v in metrics["counters"].items()})
        return flat

    def slowest_stages(self, n: int = 3) -> List[str]:
        stages = self.get_metrics()["stage_seconds"]
        return sorted(stages, key=stages.get, reverse=True)[:n]
