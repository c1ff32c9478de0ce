"""Figure rendering for training histories and sweep summaries."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_LABELS = {
    "mse_tr": "MSE (data)",
    "mse_pi_u": "MSE (momentum residual)",
    "mse_pi_p": "MSE (mass residual)",
    "total": "MSE total",
}


def save_loss_figure(history, path):
    """Semilog convergence plot of the loss terms over iterations."""
    iterations = [h["iteration"] for h in history]
    fig, ax = plt.subplots(figsize=(6, 5))
    for key in ("total", "mse_tr", "mse_pi_u", "mse_pi_p"):
        series = np.array([h[key] for h in history])
        if np.all(series == 0):
            continue
        positive = np.where(series > 0, series, np.nan)
        ax.semilogy(iterations, positive, label=_LABELS[key], linewidth=1.2)
    ax.set_xlabel("iteration")
    ax.set_ylabel("mean squared error")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_errorbar_figure(series, x_label, y_label, path):
    """Mean +/- 1 SD error bars per metric across a swept axis."""
    fig, ax = plt.subplots(figsize=(6, 5))
    for name, (xs, means, sds) in series.items():
        ax.errorbar(xs, means, yerr=sds, marker="o", capsize=3, label=name,
                    linewidth=1.0, markersize=3)
    ax.set_xlabel(x_label)
    ax.set_ylabel(y_label)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.legend(fontsize=7)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
