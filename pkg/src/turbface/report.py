"""Report rendering: delimited tables, JSON sidecars, and figures.

Every report path writes the machine-readable CSV/JSON next to PNG
figures rendered with the Agg backend, so headless runs always produce
the same artifacts.
"""

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

METRIC_COLS = ("psnr", "ssim", "dvgg")


def _ensure(out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


def write_metric_report(report, out_dir, stem: str = "report") -> dict:
    """Per-image table with an aggregate footer, sidecar, and histograms."""
    out_dir = _ensure(out_dir)
    csv_path = out_dir / f"{stem}.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "distorted_path", *METRIC_COLS])
        for row in report.rows:
            writer.writerow(
                [row["index"], row["distorted_path"]]
                + [f"{row[c]:.6f}" for c in METRIC_COLS]
            )
        writer.writerow(
            ["mean", ""] + [f"{report.aggregate[c]:.6f}" for c in METRIC_COLS]
        )
    json_path = out_dir / f"{stem}.json"
    json_path.write_text(
        json.dumps(
            {"rows": report.rows, "aggregate": report.aggregate, "meta": report.meta},
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    fig_path = out_dir / f"{stem}_metrics.png"
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.2))
    for ax, col in zip(axes, METRIC_COLS):
        vals = [row[col] for row in report.rows]
        ax.hist(vals, bins=min(20, max(5, len(vals))), color="#4878cf", edgecolor="black")
        ax.axvline(report.aggregate[col], color="crimson", linestyle="--", label="mean")
        ax.set_title(col)
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(fig_path, dpi=120)
    plt.close(fig)
    return {"csv": csv_path, "json": json_path, "figure": fig_path}


def write_ablation_report(variant_rows: list[dict], out_dir, meta: dict | None = None) -> dict:
    """Variant table (baseline first) plus a grouped metric bar chart."""
    out_dir = _ensure(out_dir)
    csv_path = out_dir / "ablation.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", *METRIC_COLS])
        for row in variant_rows:
            writer.writerow([row["variant"]] + [f"{row[c]:.6f}" for c in METRIC_COLS])
    json_path = out_dir / "ablation.json"
    json_path.write_text(
        json.dumps({"rows": variant_rows, "meta": meta or {}}, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    fig_path = out_dir / "ablation_bars.png"
    fig, axes = plt.subplots(1, 3, figsize=(13, 3.6))
    names = [row["variant"] for row in variant_rows]
    for ax, col in zip(axes, METRIC_COLS):
        ax.bar(range(len(names)), [row[col] for row in variant_rows], color="#4878cf")
        ax.set_xticks(range(len(names)))
        ax.set_xticklabels(names, rotation=30, ha="right", fontsize=7)
        ax.set_title(col)
    fig.tight_layout()
    fig.savefig(fig_path, dpi=120)
    plt.close(fig)
    return {"csv": csv_path, "json": json_path, "figure": fig_path}


def plot_loss_log(records: list[dict], out_png) -> Path:
    """Loss-component curves over training iterations."""
    out_png = Path(out_png)
    out_png.parent.mkdir(parents=True, exist_ok=True)
    iters = [r["iter"] for r in records]
    fig, ax = plt.subplots(figsize=(7, 4))
    for key, label in (("L1", "L1"), ("Lg", "edge"), ("Lp", "perceptual"), ("Lfinal", "total")):
        vals = [r[key] for r in records]
        if any(v != 0.0 for v in vals) or key in ("L1", "Lfinal"):
            ax.plot(iters, vals, label=label, linewidth=1)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_png, dpi=120)
    plt.close(fig)
    return out_png
