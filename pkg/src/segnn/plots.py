"""Figure rendering for the report paths: every delimited output the CLI
produces gets a matplotlib rendering saved next to it."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def plot_training_curves(rows: list[dict], path: str) -> None:
    epochs = [r["epoch"] for r in rows]
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for key, style in (("L_c", "-"), ("L_n", "--"), ("L_e", ":"), ("total", "-.")):
        ax.plot(epochs, [r[key] for r in rows], style, label=key)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend(loc="upper right", fontsize=8)
    pts = [(r["epoch"], r["val_acc"]) for r in rows if r["val_acc"] != ""]
    if pts:
        ax2 = ax.twinx()
        ax2.plot(*zip(*pts), "o-", color="tab:green", markersize=3, label="val acc")
        ax2.set_ylabel("validation accuracy", color="tab:green")
        ax2.set_ylim(0, 1.02)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_precision_at_k(curves: dict[str, dict], path: str) -> None:
    """``curves`` maps a series name to {k: precision}."""
    fig, ax = plt.subplots(figsize=(5.2, 3.8))
    for name, vals in curves.items():
        ks = sorted(int(k) for k in vals)
        ax.plot(ks, [vals[k] for k in ks], "o-", label=name, markersize=4)
    ax.set_xlabel("k")
    ax.set_ylabel("precision@k")
    ax.set_ylim(0, 1.02)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_robustness(rows: list[dict], path: str) -> None:
    """Mean test accuracy (with std whiskers) per perturbation rate and model."""
    fig, ax = plt.subplots(figsize=(5.2, 3.8))
    models = sorted({r["model"] for r in rows})
    for model in models:
        rates = sorted({r["rate"] for r in rows if r["model"] == model})
        means, stds = [], []
        for rate in rates:
            vals = [r["accuracy"] for r in rows
                    if r["model"] == model and r["rate"] == rate]
            means.append(np.mean(vals))
            stds.append(np.std(vals) if len(vals) > 1 else 0.0)
        ax.errorbar(rates, means, yerr=stds, marker="o", capsize=3,
                    markersize=4, label=model)
    ax.set_xlabel("edge perturbation rate")
    ax.set_ylabel("test accuracy")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
