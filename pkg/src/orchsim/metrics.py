"""Metrics derived from the event log by a pure fold.

The report is recomputable from the log alone: every count maps one-to-one
to log records and the utilization series comes from the per-record
annotations, so ``cmd_report`` on a saved log reproduces the run-time
report exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

from . import eventlog
from .errors import SimulationError


@dataclass
class MetricsReport:
    evictions: dict[str, int] = field(default_factory=dict)
    migrations: int = 0
    gc_deletions: dict[str, int] = field(default_factory=dict)
    progress_lost: int = 0
    queue_latency: dict[str, int] = field(default_factory=dict)
    final_imbalance: Optional[float] = None
    utilization_series: dict[str, list[tuple[int, float]]] = field(default_factory=dict)

    def to_payload(self) -> dict:
        return {
            "evictions": dict(sorted(self.evictions.items())),
            "migrations": self.migrations,
            "gcDeletions": dict(sorted(self.gc_deletions.items())),
            "progressLost": self.progress_lost,
            "queueLatency": dict(sorted(self.queue_latency.items())),
            "finalImbalance": self.final_imbalance,
            "utilizationSeries": {
                node: [[t, u] for t, u in series]
                for node, series in sorted(self.utilization_series.items())
            },
        }


def _image_category(reason: str) -> str:
    if reason == "ttl":
        return "image-ttl"
    if reason == "manual":
        return "image-manual"
    return "image-policy"


def metrics_summary(records: Iterable[dict]) -> MetricsReport:
    """Fold a well-formed event log into a MetricsReport."""
    report = MetricsReport()
    pending_since: dict[str, int] = {}
    for index, rec in enumerate(records):
        if not isinstance(rec, dict) or "kind" not in rec or "time" not in rec:
            raise SimulationError(f"malformed log record at index {index}")
        kind = rec["kind"]
        time = rec["time"]
        util = rec.get("util")
        if util is not None and "node" in rec and rec["node"] is not None:
            report.utilization_series.setdefault(rec["node"], []).append((time, util))
        if kind == eventlog.SERVICE_EVICTED:
            cause = rec["cause"]
            report.evictions[cause] = report.evictions.get(cause, 0) + 1
            report.progress_lost += 1
            pending_since[rec["service"]] = time
        elif kind == eventlog.SERVICE_SUBMITTED:
            pending_since[rec["service"]] = time
        elif kind == eventlog.SERVICE_REQUEUED:
            pending_since[rec["service"]] = time
        elif kind == eventlog.SERVICE_PLACED:
            sid = rec["service"]
            started = pending_since.pop(sid, time)
            report.queue_latency[sid] = report.queue_latency.get(sid, 0) + (time - started)
        elif kind == eventlog.MIGRATION:
            report.migrations += 1
        elif kind == eventlog.SERVICE_DELETED:
            category = rec["category"]
            report.gc_deletions[category] = report.gc_deletions.get(category, 0) + 1
        elif kind == eventlog.IMAGE_PRUNED:
            category = _image_category(rec["reason"])
            report.gc_deletions[category] = report.gc_deletions.get(category, 0) + 1
        elif kind == eventlog.RUN_ENDED:
            report.final_imbalance = rec["finalImbalance"]
            for node, value in rec.get("utilization", {}).items():
                series = report.utilization_series.setdefault(node, [])
                if not series or series[-1] != (time, value):
                    series.append((time, value))
    return report
