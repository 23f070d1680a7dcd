"""Figure rendering for the report paths.

Every command that writes a delimited report also renders a PNG next to
it: training curves for train runs, grouped metric bars for ablations.
The CSV stays the machine-readable contract; figures are for eyeballs.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def render_training_curves(log_rows, out_path) -> Path:
    """Loss and validation MRR@5 per epoch on twin axes."""
    epochs = [r.epoch for r in log_rows]
    losses = [r.train_loss for r in log_rows]
    val = [r.val_mrr5 for r in log_rows]
    fig, ax_loss = plt.subplots(figsize=(7, 4))
    ax_loss.plot(epochs, losses, marker="o", color="tab:blue",
                 label="train loss")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("train loss", color="tab:blue")
    ax_loss.tick_params(axis="y", labelcolor="tab:blue")
    ax_loss.grid(True, alpha=0.3)
    ax_val = ax_loss.twinx()
    ax_val.plot(epochs, val, marker="s", color="tab:red",
                label="validation MRR@5")
    ax_val.set_ylabel("validation MRR@5", color="tab:red")
    ax_val.tick_params(axis="y", labelcolor="tab:red")
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def render_metric_bars(labels, values, metric_name, out_path) -> Path:
    """One bar per configuration; used for sweeps and ablation grids."""
    fig, ax = plt.subplots(figsize=(max(5, 1.2 * len(labels)), 4))
    x = range(len(labels))
    ax.bar(x, values, color="tab:blue", width=0.6)
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylabel(metric_name)
    ax.grid(True, axis="y", alpha=0.3)
    for xi, v in zip(x, values):
        ax.text(xi, v, f"{v:.4f}", ha="center", va="bottom", fontsize=8)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
