"""Training loop, losses, and batched prediction for the fusion model.

Determinism: every epoch derives one RNG stream from (seed, "epoch", index)
that drives shuffling, augmentation noise, flips, and dropout in a fixed
order, so a given (dataset, config) pair always reproduces the same run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..augment import add_series_noise
from ..dataset import binary_target
from ..errors import EmptyDatasetError, LabelDomainError, ShapeMismatchError
from ..transform import pixels_to_unit, series_to_image
from ..util import derive_rng
from .model import FusionModel
from .optim import Adam, lr_at_epoch

LOSS_MODES = ("binary", "multiclass")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 15
    batch_size: int = 32
    initial_lr: float = 1e-4
    lr_decay: float = 0.8
    lr_decay_every: int = 3
    seed: int = 0
    loss_mode: str = "binary"
    augment_epsilon: float = 0.5
    augment_prob: float = 0.5
    flip_prob: float = 0.5

    def __post_init__(self):
        if self.loss_mode not in LOSS_MODES:
            raise LabelDomainError(f"loss_mode must be one of {LOSS_MODES}")
        if self.batch_size < 1 or self.epochs < 0:
            raise ShapeMismatchError("batch_size and epochs must be positive")


def stable_sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_with_logits(logits, targets):
    """Mean binary cross entropy in the overflow-safe form, plus d/dlogits."""
    z = np.asarray(logits, dtype=np.float64).reshape(-1)
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    if z.shape != y.shape:
        raise ShapeMismatchError("logits and targets differ in length")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise LabelDomainError("binary targets must be 0 or 1")
    per = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    grad = (stable_sigmoid(z) - y) / z.size
    return float(per.mean()), grad


def softmax_ce(logits, labels):
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels)
    if z.ndim != 2 or y.shape != (z.shape[0],):
        raise ShapeMismatchError("softmax loss expects (B, K) logits and (B,) labels")
    if y.min() < 0 or y.max() >= z.shape[1]:
        raise LabelDomainError("class labels out of range")
    shifted = z - z.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    per = logz[:, 0] - shifted[np.arange(z.shape[0]), y]
    probs = np.exp(shifted - logz)
    grad = probs
    grad[np.arange(z.shape[0]), y] -= 1.0
    return float(per.mean()), grad / z.shape[0]


def pair_targets(pairs, loss_mode):
    if loss_mode == "binary":
        return np.array([binary_target(p.window.label) for p in pairs])
    return np.array([p.window.label.value for p in pairs])


def pairs_to_batch(pairs):
    series = np.stack([p.window.values for p in pairs])[:, None, :]
    images = np.stack([pixels_to_unit(p.image.pixels) for p in pairs])[:, None, :, :]
    return series, images


def _predict_from_logits(logits, loss_mode):
    if loss_mode == "binary":
        return (np.asarray(logits).reshape(-1) >= 0.0).astype(int)
    return np.asarray(logits).argmax(axis=1)


def predict(model: FusionModel, pairs, loss_mode="binary", batch_size=64):
    preds = []
    for start in range(0, len(pairs), batch_size):
        chunk = pairs[start : start + batch_size]
        series, images = pairs_to_batch(chunk)
        logits = model.forward(series, images, train=False)
        preds.append(_predict_from_logits(logits, loss_mode))
    if not preds:
        return np.zeros(0, dtype=int)
    return np.concatenate(preds)


def train(model: FusionModel, pairs, config: TrainConfig, log=None):
    """Train in place; returns one history row per epoch."""
    if not pairs:
        raise EmptyDatasetError("cannot train on an empty dataset")
    targets = pair_targets(pairs, config.loss_mode)
    optimizer = Adam(model.params(), lr=config.initial_lr)
    n = len(pairs)
    image_size = model.config.image_size
    history = []
    for epoch in range(config.epochs):
        lr = lr_at_epoch(config.initial_lr, epoch, config.lr_decay,
                         config.lr_decay_every)
        rng = derive_rng(config.seed, "epoch", epoch)
        order = rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            chunk = [pairs[i] for i in idx]
            series, images = pairs_to_batch(chunk)
            for j, pair in enumerate(chunk):
                if config.augment_epsilon > 0 and rng.random() < config.augment_prob:
                    eps = rng.uniform(0.0, config.augment_epsilon)
                    noisy = add_series_noise(pair.window.values, eps, rng)
                    series[j, 0] = noisy
                    images[j, 0] = pixels_to_unit(
                        series_to_image(noisy, image_size).pixels
                    )
                if config.flip_prob > 0 and rng.random() < config.flip_prob:
                    images[j, 0] = images[j, 0, :, ::-1]
            logits = model.forward(series, images, train=True, rng=rng)
            batch_targets = targets[idx]
            if config.loss_mode == "binary":
                loss, dlogits = bce_with_logits(logits, batch_targets)
                dlogits = dlogits.reshape(logits.shape)
            else:
                loss, dlogits = softmax_ce(logits, batch_targets)
            optimizer.zero_grad()
            model.backward(dlogits)
            optimizer.step(lr=lr)
            loss_sum += loss * len(chunk)
            correct += int(
                (_predict_from_logits(logits, config.loss_mode) == batch_targets).sum()
            )
        row = {
            "epoch": epoch,
            "lr": lr,
            "loss": loss_sum / n,
            "train_accuracy": correct / n,
        }
        history.append(row)
        if log is not None:
            log(row)
    return history
