"""Figure rendering for the aggregation report path (PNG files, Agg backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def render_regret_curves(checkpoints, curves: dict, path) -> None:
    """Mean cumulative regret per policy with +/- one std bands."""
    fig, ax = plt.subplots(figsize=(8, 5))
    t = np.asarray(checkpoints)
    for label, (mean, std) in curves.items():
        mean = np.asarray(mean)
        std = np.asarray(std)
        ax.plot(t, mean, label=label, linewidth=2)
        ax.fill_between(t, mean - std, mean + std, alpha=0.2)
    ax.set_xlabel("step")
    ax.set_ylabel("cumulative regret")
    ax.legend(loc="upper left", fontsize=9)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_final_regrets(finals: dict, path) -> None:
    """Distribution of final cumulative regrets per policy."""
    fig, ax = plt.subplots(figsize=(8, 5))
    labels = list(finals)
    ax.boxplot([finals[label] for label in labels], tick_labels=labels)
    ax.set_ylabel("final cumulative regret")
    ax.tick_params(axis="x", rotation=15)
    ax.grid(True, alpha=0.3, axis="y")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
