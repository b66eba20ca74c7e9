"""Figure rendering for report artifacts.

Every delimited output the CLI writes gets a PNG sibling so a run
directory can be skimmed without loading the CSVs.  The Agg backend is
forced so rendering works headless.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _finish(fig, path):
    # render to a sibling temp file first so a crash never leaves a torn PNG
    path = os.fspath(path)
    tmp = path + ".tmp"
    fig.tight_layout()
    try:
        fig.savefig(tmp, dpi=120, format="png")
        os.replace(tmp, path)
    finally:
        plt.close(fig)
        if os.path.exists(tmp):
            os.remove(tmp)


def save_history_figure(rows, path):
    epochs = [r["epoch"] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, [r["loss"] for r in rows], "o-", color="tab:red", label="loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss", color="tab:red")
    twin = ax.twinx()
    twin.plot(epochs, [r["train_accuracy"] for r in rows], "s-",
              color="tab:blue", label="train accuracy")
    twin.set_ylabel("train accuracy", color="tab:blue")
    twin.set_ylim(0, 1.02)
    ax.set_title("training history")
    _finish(fig, path)


def save_sweep_figure(rows, path, ap=None):
    xs = [r["epsilon"] for r in rows]
    ys = [r["accuracy"] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(xs, ys, "o-")
    ax.fill_between(xs, ys, alpha=0.15)
    ax.set_xlabel("corruption strength")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0, 1.02)
    title = "robustness sweep"
    if ap is not None:
        title += f" (AP = {ap:.4f})"
    ax.set_title(title)
    _finish(fig, path)


def save_prune_figure(rows, path):
    rates = [r["rate"] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(rates, [r["accuracy_before"] for r in rows], "o--",
            label="before fine-tune")
    ax.plot(rates, [r["accuracy_after"] for r in rows], "s-",
            label="after fine-tune")
    ax.set_xlabel("prune rate")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0, 1.02)
    ax.legend()
    ax.set_title("pruning sweep")
    _finish(fig, path)


def save_ablation_figure(rows, path):
    names = [r["variant"] for r in rows]
    clean = [r["accuracy"] for r in rows]
    noisy = [r.get("noisy_accuracy") for r in rows]
    x = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(6, 4))
    if all(v is not None for v in noisy):
        ax.bar(x - 0.2, clean, width=0.4, label="clean", color="tab:blue")
        ax.bar(x + 0.2, noisy, width=0.4, label="50% noise", color="tab:orange")
        ax.legend()
    else:
        ax.bar(x, clean, color="tab:blue")
    ax.set_xticks(x, names)
    ax.set_ylabel("accuracy")
    ax.set_ylim(0, 1.02)
    ax.set_title("branch ablation")
    _finish(fig, path)


def save_spectrum_figure(spectrum, path, theory=None):
    mags = np.asarray(spectrum.magnitude, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(np.arange(mags.size), mags, lw=0.8, label="|DFT|")
    if theory is not None:
        ax.axhline(theory, color="tab:red", ls="--",
                   label="predicted component scale")
    ax.set_xlabel("frequency bin")
    ax.set_ylabel("magnitude")
    ax.legend()
    ax.set_title("noise spectrum")
    _finish(fig, path)


def save_distribution_figure(p, q, path, title="feature distributions",
                             q_label="corrupted"):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(p, label="clean", lw=0.9)
    ax.plot(q, label=q_label, lw=0.9)
    ax.set_xlabel("feature index")
    ax.set_ylabel("probability")
    ax.legend()
    ax.set_title(title)
    _finish(fig, path)


def save_image_figure(gray, path):
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.imshow(gray.pixels, cmap="gray", vmin=0, vmax=255)
    ax.set_xticks([])
    ax.set_yticks([])
    ax.set_title("imaged series")
    _finish(fig, path)
