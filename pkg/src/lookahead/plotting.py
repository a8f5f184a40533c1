"""Figures for the CLI reports (written to files, never shown)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def routing_proportions_figure(proportions: dict[str, list[float]], names: list[str], path) -> Path:
    """Grouped bars of per-model selection share, one group per router."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    width = 0.8 / max(1, len(proportions))
    x = np.arange(len(names))
    for i, (router, props) in enumerate(proportions.items()):
        ax.bar(x + i * width, props, width, label=router)
    ax.set_xticks(x + width * (len(proportions) - 1) / 2)
    ax.set_xticklabels(names)
    ax.set_ylabel("routed queries (%)")
    ax.legend(fontsize=8)
    return _save(fig, path)


def ablation_figure(rows: list[tuple[str, float, float]], path, ylabel: str = "normalized score") -> Path:
    """Bars of (label, mean, std) over seeds."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    labels = [r[0] for r in rows]
    ax.bar(labels, [r[1] for r in rows], yerr=[r[2] for r in rows], capsize=4, color="#4c72b0")
    ax.set_ylabel(ylabel)
    ax.tick_params(axis="x", labelrotation=20)
    return _save(fig, path)


def mi_boxplot(samples: dict[str, list[float]], path) -> Path:
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    ax.boxplot(list(samples.values()))
    ax.set_xticks(range(1, len(samples) + 1))
    ax.set_xticklabels(list(samples))
    ax.set_ylabel("MI estimate (nats)")
    return _save(fig, path)


def data_efficiency_figure(series: dict[str, tuple[list[float], list[float]]], path) -> Path:
    """Lines of score against training-data fraction."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for name, (fracs, scores) in series.items():
        ax.plot(np.asarray(fracs) * 100, scores, marker="o", label=name)
    ax.set_xlabel("training data (%)")
    ax.set_ylabel("normalized score")
    ax.legend(fontsize=8)
    return _save(fig, path)


def training_curve_figure(steps, losses, val_acc, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(steps, losses, label="train loss")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax2 = ax.twinx()
    ax2.plot(steps, val_acc, color="#dd8452", label="validation accuracy")
    ax2.set_ylabel("validation accuracy")
    fig.legend(loc="upper right", fontsize=8)
    return _save(fig, path)


__all__ = ["routing_proportions_figure", "ablation_figure", "mi_boxplot", "data_efficiency_figure",
           "training_curve_figure"]
