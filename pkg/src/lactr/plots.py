"""Figure rendering for reports: training traces, recall curves, sweeps.

Writes PNG files next to the delimited outputs; uses the Agg backend so
rendering works headless.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def plot_trace(trace, path: str) -> None:
    """Objective value per sweep."""
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = [rec.sweep for rec in trace.sweeps]
    ys = [rec.log_likelihood for rec in trace.sweeps]
    ax.plot(xs, ys, marker=".", lw=1.2)
    ax.set_xlabel("sweep")
    ax.set_ylabel("objective")
    ax.set_title("training trace")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_recall_curves(curves: dict, path: str) -> None:
    """Mean recall vs cutoff, one line per (model, latent)."""
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    for (model, latent), curve in sorted(curves.items()):
        label = model if latent == "none" else f"{model} ({latent})"
        ax.plot(curve.xs, curve.mean_recall, marker="o", ms=3, label=label)
    ax.set_xlabel("top X")
    ax.set_ylabel("mean recall")
    ax.set_ylim(bottom=0)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_sweep(values: list[float], series: dict[str, list[float]], x: int,
               path: str) -> None:
    """Recall at a fixed cutoff as a function of the swept weight."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, ys in sorted(series.items()):
        ax.plot(values, ys, marker="o", ms=4, label=label)
    ax.set_xscale("log")
    ax.set_xlabel("attention weight")
    ax.set_ylabel(f"mean recall@{x}")
    ax.grid(alpha=0.3, which="both")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
