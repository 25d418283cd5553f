"""Tab-separated reports and the matplotlib figures written next to them."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

METRICS_HEADER = "epoch\ttrain_loss\tdev_wer\tlr"
ABLATION_HEADER = "value\tdev_wer\ttest_wer\terror"

AXIS_TITLES = {
    "scales": "Number of 1-D convolutions per MST block",
    "fc_layers": "Number of FC layers after the frame embedder",
    "encoder": "Temporal encoder",
    "ctc_levels": "Number of CTC losses (deepest retained)",
}


def write_lines(path, header, lines) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for line in lines:
            fh.write(line + "\n")
    return path


def read_metrics(path) -> list:
    """Epoch records of a metrics file as (epoch, loss, dev_wer, lr) tuples."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip() or line.startswith("epoch"):
                continue
            e, loss, w, lr = line.rstrip("\n").split("\t")[:4]
            rows.append((int(e), float(loss), float(w), float(lr)))
    return rows


def _style(ax):
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    ax.grid(alpha=0.3, linewidth=0.5)


def plot_training_curves(records, path) -> Path:
    """Loss and dev WER against epoch; learning-rate drops are marked."""
    epochs = [r.epoch for r in records]
    fig, (ax_loss, ax_wer) = plt.subplots(1, 2, figsize=(9, 3.2))
    ax_loss.plot(epochs, [r.train_loss for r in records], color="C0")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("train loss (summed CTC)")
    ax_loss.set_yscale("log")
    ax_wer.plot(epochs, [r.dev_wer for r in records], color="C3", marker=".", markersize=3)
    ax_wer.set_xlabel("epoch")
    ax_wer.set_ylabel("dev WER (%)")
    for prev, cur in zip(records, records[1:]):
        if cur.lr != prev.lr:
            for ax in (ax_loss, ax_wer):
                ax.axvline(cur.epoch, color="0.6", linestyle="--", linewidth=0.8)
    for ax in (ax_loss, ax_wer):
        _style(ax)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_ablation(rows, axis, path) -> Path:
    labels = [str(r.value) for r in rows]
    x = np.arange(len(rows))
    dev = [np.nan if r.dev_wer is None else r.dev_wer for r in rows]
    test = [np.nan if r.test_wer is None else r.test_wer for r in rows]
    fig, ax = plt.subplots(figsize=(5.5, 3.2))
    ax.bar(x - 0.2, dev, 0.4, label="dev")
    ax.bar(x + 0.2, test, 0.4, label="test")
    for i, r in enumerate(rows):
        if r.error:
            ax.text(i, 0, "n/a", ha="center", va="bottom", fontsize=8, color="0.4")
    ax.set_xticks(x, labels)
    ax.set_xlabel(AXIS_TITLES.get(axis, axis))
    ax.set_ylabel("WER (%)")
    ax.legend(frameon=False)
    _style(ax)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_posteriors(log_probs, path, title=None) -> Path:
    """Per-frame class posteriors of one decoded sample; the last row is the blank."""
    probs = np.exp(np.asarray(log_probs)).T
    fig, ax = plt.subplots(figsize=(6, 3))
    im = ax.imshow(probs, aspect="auto", origin="lower", cmap="viridis", vmin=0.0, vmax=1.0)
    ax.set_xlabel("frame (deepest level)")
    ax.set_ylabel("class")
    ticks = list(range(probs.shape[0]))
    ax.set_yticks(ticks, [str(t) for t in ticks[:-1]] + ["blank"])
    if title:
        ax.set_title(title, fontsize=9)
    fig.colorbar(im, ax=ax, fraction=0.04)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)
