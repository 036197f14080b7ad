"""Delimited tables and figures for optimizer and benchmark reports."""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import List, Optional, Sequence

from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

__all__ = [
    "BENCH_COLUMNS",
    "bench_rows",
    "format_delimited",
    "significance_stars",
    "plot_auroc_report",
    "plot_transfer_metrics",
]

BENCH_COLUMNS = (
    "policy",
    "d",
    "images",
    "data_transferred_bytes",
    "data_transferred_change_pct",
    "decode_time_s",
    "decode_time_change_pct",
    "throughput_ips",
    "throughput_change_pct",
)


def _pct(value: float, base: float) -> Optional[float]:
    if not base:
        return None
    return 100.0 * (value - base) / base


def bench_rows(results: Sequence[dict], baseline: Optional[str] = None) -> List[dict]:
    """Table rows from ``{"policy", "d", **TransferMetrics.as_dict()}`` entries.

    Changes are relative to the row whose policy is ``baseline`` (default:
    the full-stream row, d == -1, else the last row).
    """
    if not results:
        return []
    base = None
    for r in results:
        if (baseline is not None and r["policy"] == baseline) or (baseline is None and r["d"] == -1):
            base = r
    if base is None:
        base = results[-1]
    rows = []
    for r in results:
        rows.append({
            "policy": r["policy"],
            "d": r["d"],
            "images": r["images_processed"],
            "data_transferred_bytes": r["bytes_transferred"],
            "data_transferred_change_pct": _pct(r["bytes_transferred"], base["bytes_transferred"]),
            "decode_time_s": r["decode_time_s"],
            "decode_time_change_pct": _pct(r["decode_time_s"], base["decode_time_s"]),
            "throughput_ips": r["throughput_ips"],
            "throughput_change_pct": _pct(r["throughput_ips"], base["throughput_ips"]),
        })
    return rows


def format_delimited(rows: Sequence[dict], columns: Sequence[str], delimiter: str = ",") -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        cells = []
        for c in columns:
            v = row.get(c)
            if v is None:
                cells.append("")
            elif isinstance(v, float):
                cells.append(f"{v:.6g}")
            else:
                cells.append(v)
        writer.writerow(cells)
    return buf.getvalue()


def significance_stars(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return "ns"


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    FigureCanvasAgg(fig)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    return path


def plot_auroc_report(report: dict, path) -> Path:
    """Mean AUROC (+- std over labels) for the reference and each evaluated d.

    The chosen decomposition is hatched; each bar is annotated with its
    one-tailed p-value category.
    """
    rows = report["decompositions"]
    names = ["original"] + [f"d={r['d']}\n{r['width']}x{r['height']}" for r in rows]
    means = [report["reference"]["mean"]] + [r["auroc"]["mean"] for r in rows]
    stds = [report["reference"]["std"]] + [r["auroc"]["std"] for r in rows]

    fig = Figure(figsize=(1.2 + 1.1 * len(names), 3.6))
    ax = fig.add_subplot(1, 1, 1)
    bars = ax.bar(range(len(names)), means, yerr=stds, capsize=3,
                  color=["0.55"] + ["tab:blue"] * len(rows), edgecolor="black", linewidth=0.6)
    for bar, r in zip(bars[1:], rows):
        if r["d"] == report["chosen_d"]:
            bar.set_hatch("//")
            bar.set_facecolor("tab:orange")
        top = bar.get_height() + (r["auroc"]["std"] or 0.0)
        ax.text(bar.get_x() + bar.get_width() / 2, top + 0.01, significance_stars(r["p_value"]),
                ha="center", va="bottom", fontsize=8)
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, fontsize=8)
    ax.set_ylabel("mean AUROC")
    lo = min(m - (s or 0.0) for m, s in zip(means, stds))
    ax.set_ylim(max(0.0, lo - 0.1), 1.05)
    ax.set_title(f"chosen d={report['chosen_d']} (significance {report['significance']})", fontsize=9)
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    return _save(fig, path)


def plot_transfer_metrics(rows: Sequence[dict], path) -> Path:
    """Three panels: data transferred, decode time, throughput, one bar per policy."""
    fig = Figure(figsize=(9, 3.2))
    panels = (
        ("data_transferred_bytes", "Data transferred (MB)", 1e-6, "data_transferred_change_pct"),
        ("decode_time_s", "Decode time (s)", 1.0, "decode_time_change_pct"),
        ("throughput_ips", "Throughput (images/s)", 1.0, "throughput_change_pct"),
    )
    labels = [r["policy"] for r in rows]
    for i, (key, title, scale, change) in enumerate(panels, start=1):
        ax = fig.add_subplot(1, 3, i)
        vals = [r[key] * scale for r in rows]
        bars = ax.bar(range(len(rows)), vals, color="tab:blue", edgecolor="black", linewidth=0.6)
        for bar, r in zip(bars, rows):
            pct = r.get(change)
            if pct is not None and abs(pct) > 1e-9:
                ax.text(bar.get_x() + bar.get_width() / 2, bar.get_height(), f"{pct:+.0f}%",
                        ha="center", va="bottom", fontsize=7)
        ax.set_xticks(range(len(rows)))
        ax.set_xticklabels(labels, fontsize=8)
        ax.set_title(title, fontsize=9)
        ax.spines["top"].set_visible(False)
        ax.spines["right"].set_visible(False)
    fig.tight_layout()
    return _save(fig, path)
