"""Figure rendering for metric streams and evaluation sweeps."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def read_metrics(path: str) -> list[dict]:
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def plot_success_curves(metric_files: list[str], out_path: str,
                        split: str = "test", title: str | None = None,
                        csv_path: str | None = None) -> None:
    """Render success-rate-vs-steps curves to a vector file.

    Each input is a JSON-lines metrics stream; curves are labeled by file
    stem. The parsed points are also written as CSV next to the figure so
    the numbers stay available without re-parsing logs.
    """
    fig, ax = plt.subplots(figsize=(7, 4.5))
    rows = []
    for path in metric_files:
        label = Path(path).stem
        records = [r for r in read_metrics(path) if r.get("split") == split]
        xs = [r["step"] for r in records]
        ys = [r["success_rate"] for r in records]
        ax.plot(xs, ys, marker="o", markersize=3, label=label)
        rows.extend({"series": label, "step": x, "success_rate": y}
                    for x, y in zip(xs, ys))
    ax.set_xlabel("environment steps")
    ax.set_ylabel(f"{split} success rate")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(alpha=0.3)
    ax.legend()
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)

    if csv_path is None:
        csv_path = str(Path(out_path).with_suffix(".csv"))
    with open(csv_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=["series", "step", "success_rate"])
        writer.writeheader()
        writer.writerows(rows)
