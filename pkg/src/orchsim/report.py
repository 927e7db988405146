"""Rendering of metrics reports: text tables, delimited series, figures."""

from __future__ import annotations

import csv
import os
from typing import Optional, TextIO

from .cluster import ClusterState, Phase
from .metrics import MetricsReport


def _counter_lines(title: str, counts: dict[str, int]) -> list[str]:
    lines = [f"{title}:"]
    if not counts:
        lines.append("  (none)")
    for key in sorted(counts):
        lines.append(f"  {key:<24} {counts[key]}")
    return lines


def render_text(report: MetricsReport, state: Optional[ClusterState] = None) -> str:
    """Human-readable summary table of a run."""
    lines: list[str] = []
    if state is not None:
        lines.append(f"final clock: {state.clock} s")
        lines.append("placements:")
        for nid in sorted(state.nodes):
            node = state.nodes[nid]
            members = ", ".join(sorted(node.placed)) or "-"
            lines.append(f"  {nid:<12} [{node.status.value:<4}] {members}")
        pending = sorted(
            sid for sid, svc in state.services.items() if svc.status.phase is Phase.PENDING
        )
        if pending:
            lines.append("pending: " + ", ".join(pending))
        lines.append("")
    lines.extend(_counter_lines("evictions", report.evictions))
    lines.append(f"migrations: {report.migrations}")
    lines.extend(_counter_lines("gc deletions", report.gc_deletions))
    lines.append(f"progress lost: {report.progress_lost}")
    lines.extend(_counter_lines("queue latency (s)", report.queue_latency))
    if report.final_imbalance is None:
        lines.append("final imbalance: n/a")
    else:
        lines.append(f"final imbalance: {report.final_imbalance:.4f}")
    return "\n".join(lines) + "\n"


def write_utilization_csv(report: MetricsReport, handle: TextIO) -> None:
    writer = csv.writer(handle)
    writer.writerow(["time", "node", "utilization"])
    for node in sorted(report.utilization_series):
        for time, value in report.utilization_series[node]:
            writer.writerow([time, node, f"{value:.6f}"])


def render_figures(report: MetricsReport, out_dir: str) -> list[str]:
    """Render PNG figures next to the delimited outputs; returns the paths."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []

    fig, ax = plt.subplots(figsize=(8, 4.5))
    for node in sorted(report.utilization_series):
        series = report.utilization_series[node]
        times = [t for t, _ in series]
        values = [u for _, u in series]
        ax.step(times, values, where="post", label=node)
    ax.set_xlabel("sim time (s)")
    ax.set_ylabel("dominant-share utilization")
    ax.set_ylim(-0.02, 1.05)
    ax.set_title("node utilization")
    if report.utilization_series:
        ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    path = os.path.join(out_dir, "utilization.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    labels = []
    values = []
    for cause in sorted(report.evictions):
        labels.append(f"evicted:{cause}")
        values.append(report.evictions[cause])
    if report.migrations:
        labels.append("migrations")
        values.append(report.migrations)
    for category in sorted(report.gc_deletions):
        labels.append(f"deleted:{category}")
        values.append(report.gc_deletions[category])
    fig, ax = plt.subplots(figsize=(8, 4.5))
    if labels:
        ax.barh(range(len(labels)), values)
        ax.set_yticks(range(len(labels)))
        ax.set_yticklabels(labels, fontsize=8)
        ax.invert_yaxis()
    else:
        ax.text(0.5, 0.5, "no activity", ha="center", va="center")
    ax.set_xlabel("count")
    ax.set_title("evictions, migrations, deletions")
    fig.tight_layout()
    path = os.path.join(out_dir, "activity.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)
    return written
