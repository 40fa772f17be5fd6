"""Metrics-log loading and the accuracy-vs-labels report outputs."""

from __future__ import annotations

import json

import numpy as np

REQUIRED_KEYS = ("round", "labeled_count", "test_accuracy", "query_indices",
                 "uncertainty", "diversity")


class MetricsFormatError(ValueError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


def load_metrics(path: str) -> list[list[dict]]:
    """Parse a JSON Lines metrics log into per-run segments.

    Multi-seed logs are concatenated runs; a round counter that fails to
    increase starts a new segment.
    """
    segments: list[list[dict]] = []
    current: list[dict] = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MetricsFormatError(line_no, f"invalid JSON ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise MetricsFormatError(line_no, "expected a JSON object")
            missing = [k for k in REQUIRED_KEYS if k not in rec]
            if missing:
                raise MetricsFormatError(line_no, f"missing key(s) {missing}")
            if not isinstance(rec["round"], int) or rec["round"] < 1:
                raise MetricsFormatError(line_no, "round must be a positive integer")
            if not (0.0 <= rec["test_accuracy"] <= 1.0):
                raise MetricsFormatError(line_no, "test_accuracy outside [0, 1]")
            if current and rec["round"] <= current[-1]["round"]:
                segments.append(current)
                current = []
            current.append(rec)
    if current:
        segments.append(current)
    if not segments:
        raise MetricsFormatError(0, "metrics file holds no records")
    return segments


def _aligned(segments: list[list[dict]]):
    """Rows grouped by position: (round, labeled_count, [accuracies])."""
    depth = max(len(s) for s in segments)
    rows = []
    for i in range(depth):
        present = [s[i] for s in segments if len(s) > i]
        rows.append((present[0]["round"], present[0]["labeled_count"],
                     [r["test_accuracy"] for r in present]))
    return rows


def accuracy_table(segments: list[list[dict]]) -> str:
    """Tab-separated accuracy-vs-labels table, one row per round."""
    lines = ["round\tlabeled_count\truns\tmean_accuracy\tmin_accuracy\tmax_accuracy"]
    for rnd, count, accs in _aligned(segments):
        lines.append(f"{rnd}\t{count}\t{len(accs)}\t{np.mean(accs):.4f}"
                     f"\t{min(accs):.4f}\t{max(accs):.4f}")
    return "\n".join(lines)


def write_accuracy_csv(segments: list[list[dict]], path: str) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        n_runs = len(segments)
        writer.writerow(["round", "labeled_count"]
                        + [f"accuracy_run{i + 1}" for i in range(n_runs)]
                        + ["mean_accuracy"])
        for rnd, count, accs in _aligned(segments):
            per_run = []
            for s in segments:
                match = [r for r in s if r["round"] == rnd]
                per_run.append(f"{match[0]['test_accuracy']:.6f}" if match else "")
            writer.writerow([rnd, count] + per_run + [f"{np.mean(accs):.6f}"])


def write_accuracy_chart(segments: list[list[dict]], path: str) -> None:
    """Accuracy-vs-labels line chart, one faint line per run plus the mean."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for i, seg in enumerate(segments):
        xs = [r["labeled_count"] for r in seg]
        ys = [r["test_accuracy"] for r in seg]
        ax.plot(xs, ys, color="tab:blue", alpha=0.35 if len(segments) > 1 else 1.0,
                marker="o", markersize=3,
                label="runs" if i == 0 and len(segments) > 1 else
                      ("accuracy" if len(segments) == 1 else None))
    if len(segments) > 1:
        rows = _aligned(segments)
        ax.plot([c for _, c, _ in rows], [float(np.mean(a)) for _, _, a in rows],
                color="tab:red", linewidth=2, marker="o", markersize=4, label="mean")
    ax.set_xlabel("labeled samples")
    ax.set_ylabel("test accuracy")
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
