"""Run artifacts: NDJSON log, summary CSV, curve data, and rendered figures.

Every writer is deterministic given the log contents, except for the
wall-clock seconds column of the summary CSV, which is measurement data.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .loop import ExperimentLog
from .metrics import LearningCurve, auc, display_auc

SUMMARY_COLUMNS = ["t", "n_labeled", "n_unlabeled", "f1", "em", "seconds"]


def write_ndjson(log: ExperimentLog, path: Path, include_timing: bool = True) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        header = {
            "type": "run_start",
            "n_total": log.n_total,
            "config": log.config.as_flat_dict(),
        }
        fh.write(json.dumps(header) + "\n")
        for record in log.records:
            fh.write(json.dumps(record.as_dict(include_timing=include_timing)) + "\n")
        fh.write(json.dumps({"type": "run_end", "auc": log.auc}) + "\n")


def write_summary_csv(log: ExperimentLog, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for r in log.records:
            writer.writerow(
                [
                    r.t,
                    r.n_labeled,
                    r.n_unlabeled,
                    f"{r.f1:.4f}" if r.f1 is not None else "",
                    f"{r.em:.4f}" if r.em is not None else "",
                    f"{r.wall_seconds:.3f}",
                ]
            )


def write_curve_dat(curve: LearningCurve, path: Path) -> None:
    """Two-column plain data file (step, f1), gnuplot-friendly."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# step f1\n")
        for step, f1 in curve.checkpoints:
            fh.write(f"{step} {f1:.4f}\n")


def write_eval_csv(log: ExperimentLog, path: Path) -> None:
    """Per-checkpoint evaluation report plus a one-line AUC summary."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["checkpoint", "f1", "em"])
        for r in log.records:
            if r.f1 is not None:
                writer.writerow([r.t, f"{r.f1:.4f}", f"{r.em:.4f}"])
        if log.auc is not None:
            fh.write(f"# auc={display_auc(log.auc)}\n")


def plot_learning_curve(curve: LearningCurve, path: Path, label: str = "") -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(curve.steps, curve.f1_values, marker="o", label=label or None)
    ax.set_xlabel("iteration")
    ax.set_ylabel("F1")
    ax.set_title(f"learning curve (AUC {display_auc(auc(curve))})")
    ax.grid(True, alpha=0.3)
    if label:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_comparison(curves: dict[str, LearningCurve], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for name, curve in curves.items():
        ax.plot(
            curve.steps,
            curve.f1_values,
            marker="o",
            label=f"{name} (AUC {display_auc(auc(curve))})",
        )
    ax.set_xlabel("iteration")
    ax.set_ylabel("F1")
    ax.set_title("strategy comparison")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_comparison_csv(
    rows: list[tuple[str, LearningCurve]], path: Path
) -> None:
    """One row per strategy: F1 at each shared checkpoint plus the AUC."""
    grids = {name: tuple(curve.steps) for name, curve in rows}
    distinct = sorted(set(grids.values()))
    if len(distinct) > 1:
        listing = "; ".join(f"{name}: {list(g)}" for name, g in grids.items())
        raise ValueError(f"checkpoint grids differ across runs: {listing}")
    steps = rows[0][1].steps
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy"] + [f"f1@{s}" for s in steps] + ["auc"])
        for name, curve in rows:
            writer.writerow(
                [name]
                + [_trim(f) for f in curve.f1_values]
                + [display_auc(auc(curve))]
            )


def _trim(value: float) -> str:
    text = f"{value:.4f}".rstrip("0").rstrip(".")
    return text if text else "0"
