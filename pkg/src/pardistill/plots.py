"""Figures rendered from an experiment report, next to the CSV/JSON output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def render_report_figures(report: dict, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return [
        _trend_figure(report, out_dir / "fig-teacher-student-trend.png"),
        _error_bars_figure(report, out_dir / "fig-error-rates.png"),
    ]


def _trend_figure(report: dict, path: Path) -> Path:
    trend = report["trend"]
    tiers = trend["tiers"]
    x = np.arange(len(tiers))
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(x, trend["teacher_mean_fer_clean"], marker="o", label="teacher (clean eval)")
    ax.plot(x, trend["student_mean_fer"], marker="s", label="student (far eval)")
    ax.axhline(trend["baseline_mean_fer"], ls="--", color="0.4", label="far-hard baseline")
    ax.axhline(trend["multi_cond_mean_fer"], ls=":", color="0.6", label="multi-cond")
    ax.set_xticks(x, tiers)
    ax.set_xlabel("teacher tier")
    ax.set_ylabel("mean eval frame error rate")
    title = "Student error follows teacher error"
    if trend.get("spearman_teacher_student") is not None:
        title += f" (Spearman {trend['spearman_teacher_student']:+.2f})"
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def _error_bars_figure(report: dict, path: Path) -> Path:
    # mean eval-far FER/SER per (model, tier) over seeds
    groups: dict[str, dict[str, list[float]]] = {}
    for entry in report["models"]:
        name = entry["model"] + (f"-{entry['tier']}" if entry["tier"] else "")
        metrics = entry["metrics"]["eval_far"]
        bucket = groups.setdefault(name, {"fer": [], "ser": []})
        bucket["fer"].append(metrics["fer"])
        bucket["ser"].append(metrics["ser"])
    names = list(groups)
    fer = [float(np.mean(groups[n]["fer"])) for n in names]
    ser = [float(np.mean(groups[n]["ser"])) for n in names]
    x = np.arange(len(names))
    width = 0.38
    fig, ax = plt.subplots(figsize=(max(6.0, 1.1 * len(names)), 4.0))
    ax.bar(x - width / 2, fer, width, label="frame error rate")
    ax.bar(x + width / 2, ser, width, label="segment error rate")
    ax.set_xticks(x, names, rotation=30, ha="right")
    ax.set_ylabel("mean error on far eval split")
    ax.set_title("Eval errors by model")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
