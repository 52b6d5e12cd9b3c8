import time
import psutil
from typing import Dict, List, Any
from collections import defaultdict, deque
from contextlib import contextmanager
from datetime import datetime
import logging
from statistics import mean

from artcombine.config import settings

logger = logging.getLogger(__name__)


class PerformanceMonitor:
    """Wall time per study stage plus process and system resource snapshots"""

    def __init__(self, slow_stage_seconds: float = None):
        self.stage_metrics = defaultdict(list)
        self.system_metrics = deque(maxlen=1000)
        self.slow_stages = deque(maxlen=100)
        self.slow_stage_threshold = settings.slow_stage_seconds if slow_stage_seconds is None else slow_stage_seconds
        self._process = psutil.Process()

    @contextmanager
    def stage(self, name: str, items: int = 0):
        """Time a block of work; ``items`` is the number of replicates it covered"""
        start = time.perf_counter()
        status = "success"
        try:
            yield
        except Exception:
            status = "error"
            raise
        finally:
            self.record_stage(name, time.perf_counter() - start, items, status)

    def record_stage(self, name: str, elapsed: float, items: int = 0, status: str = "success"):
        metric = {
            "timestamp": datetime.utcnow(),
            "stage": name,
            "elapsed": elapsed,
            "items": items,
            "status": status,
        }
        self.stage_metrics[name].append(metric)

        if elapsed > self.slow_stage_threshold:
            self.slow_stages.append(metric)
            logger.warning(f"Slow stage detected: {name} took {elapsed:.2f}s")

        self._record_system_metrics()
        logger.debug(f"Stage {name}: {elapsed:.3f}s, {items} items, {status}")

    def _record_system_metrics(self):
        try:
            memory = psutil.virtual_memory()
            self.system_metrics.append({
                "timestamp": datetime.utcnow(),
                "cpu_percent": psutil.cpu_percent(interval=None),
                "memory_percent": memory.percent,
                "process_rss_mb": self._process.memory_info().rss / (1024 ** 2),
            })
        except Exception as e:
            logger.error(f"Error recording system metrics: {str(e)}")

    def get_performance_summary(self) -> Dict[str, Any]:
        """Totals per stage and recent resource usage"""
        if not self.stage_metrics:
            return {"message": "No stages recorded"}

        stages = {}
        for name, metrics in self.stage_metrics.items():
            elapsed = [m["elapsed"] for m in metrics]
            items = sum(m["items"] for m in metrics)
            total = sum(elapsed)
            stages[name] = {
                "runs": len(metrics),
                "total_seconds": round(total, 3),
                "items": items,
                "items_per_second": round(items / total, 1) if total > 0 and items else None,
            }

        return {
            "stages": stages,
            "total_seconds": round(sum(s["total_seconds"] for s in stages.values()), 3),
            "slow_stages": [m["stage"] for m in self.slow_stages],
            "system_health": self._get_system_health_summary(),
        }

    def _get_system_health_summary(self) -> Dict[str, Any]:
        if not self.system_metrics:
            return {"status": "no_data"}

        recent: List[Dict] = list(self.system_metrics)[-10:]
        return {
            "avg_cpu_percent": round(mean(m["cpu_percent"] for m in recent), 1),
            "avg_memory_percent": round(mean(m["memory_percent"] for m in recent), 1),
            "peak_process_rss_mb": round(max(m["process_rss_mb"] for m in self.system_metrics), 1),
        }

    def clear_metrics(self):
        self.stage_metrics.clear()
        self.system_metrics.clear()
        self.slow_stages.clear()
        logger.info("Cleared performance metrics")


# Global performance monitor instance
performance_monitor = PerformanceMonitor()
