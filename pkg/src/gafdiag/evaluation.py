"""Evaluation metrics and study drivers: accuracy under corruption,
area-under-polyline robustness scoring, feature-distribution divergence,
and branch ablation."""

from __future__ import annotations

import numpy as np

from .augment import add_series_noise, perturb_image
from .dataset import PairedSample, TimeWindow
from .errors import (
    DegenerateRectangleError,
    DomainError,
    InsufficientPointsError,
    SupportMismatchError,
)
from .net.model import FusionModel, ModelConfig
from .net.train import TrainConfig, train
from .pruning import accuracy_on
from .transform import series_to_image
from .util import derive_rng

CORRUPTION_MODES = ("series", "image", "both")


def ap_polyline(points):
    """Trapezoid area under a polyline divided by its x_max * y_max
    bounding rectangle.  Points are (x, y) with strictly increasing x and
    nonnegative y."""
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 2:
        raise InsufficientPointsError("polyline needs at least two points")
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    if np.any(np.diff(xs) <= 0):
        raise DomainError("polyline x values must be strictly increasing")
    if np.any(ys < 0):
        raise DomainError("polyline y values must be nonnegative")
    x_max, y_max = xs[-1], ys.max()
    if x_max <= 0 or y_max <= 0:
        raise DegenerateRectangleError("bounding rectangle has zero area")
    area = float(np.trapezoid(ys, xs))
    return area / (x_max * y_max)


def ap_from_sweep(rows):
    """Robustness score from sweep rows of (epsilon, accuracy)."""
    return ap_polyline([(row["epsilon"], row["accuracy"]) for row in rows])


def align_features(a, b):
    """Contiguous group-max pooling of the longer vector onto the length of
    the shorter, so two branch features become comparable."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.size == 0 or b.size == 0:
        raise SupportMismatchError("cannot align an empty feature vector")

    def pool(vec, target):
        bounds = (np.arange(target + 1) * vec.size) // target
        return np.array(
            [vec[bounds[i] : bounds[i + 1]].max() for i in range(target)]
        )

    if a.size > b.size:
        a = pool(a, b.size)
    elif b.size > a.size:
        b = pool(b, a.size)
    return a, b


def feature_to_distribution(values):
    """Softmax over a feature vector; a length-preserving distribution."""
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise SupportMismatchError("cannot normalize an empty vector")
    if not np.all(np.isfinite(v)):
        raise DomainError("feature vector must be finite")
    shifted = v - v.max()
    e = np.exp(shifted)
    return e / e.sum()


def kl_divergence(p, q, floor=1e-12):
    """Sum of p * ln(p / q) with q floored and renormalized so the result
    stays finite; zero-probability p terms contribute nothing."""
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    if p.shape != q.shape:
        raise SupportMismatchError("distributions differ in length")
    for name, dist in (("p", p), ("q", q)):
        if np.any(dist < 0) or not np.all(np.isfinite(dist)):
            raise DomainError(f"{name} must be a finite nonnegative vector")
        if abs(dist.sum() - 1.0) > 1e-9:
            raise DomainError(f"{name} must sum to 1")
    q = np.maximum(q, floor)
    q = q / q.sum()
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def corrupt_pair(pair: PairedSample, mode, epsilon, rng, image_size):
    """One corrupted copy of a test pair.

    series: noise on the raw window, image re-derived from the noisy window.
    image: pixel replacement on the image only, series untouched.
    both: series noise with re-derivation, then pixel replacement on top.
    """
    if mode not in CORRUPTION_MODES:
        raise DomainError(f"corruption mode must be one of {CORRUPTION_MODES}")
    if epsilon == 0:
        return pair
    window = pair.window
    image = pair.image
    if mode in ("series", "both"):
        noisy = add_series_noise(window.values, epsilon, rng)
        window = TimeWindow(values=noisy, label=window.label,
                            source_id=window.source_id, offset=window.offset)
        image = series_to_image(noisy, image_size)
    if mode in ("image", "both"):
        image = perturb_image(image, epsilon, rng)
    return PairedSample(window=window, image=image, label=pair.label)


def corrupt_pairs(pairs, mode, epsilon, seed, image_size, eps_index=0):
    out = []
    for item, pair in enumerate(pairs):
        rng = derive_rng(seed, "sweep", mode, eps_index, item)
        out.append(corrupt_pair(pair, mode, epsilon, rng, image_size))
    return out


def robustness_sweep(model: FusionModel, pairs, epsilons, seed, mode="series",
                     loss_mode="binary"):
    """Accuracy at each corruption strength; per-item RNG streams make every
    row independently reproducible."""
    image_size = model.config.image_size
    rows = []
    for i, eps in enumerate(epsilons):
        if eps < 0:
            raise DomainError("corruption strengths must be nonnegative")
        corrupted = corrupt_pairs(pairs, mode, eps, seed, image_size, i)
        rows.append({
            "epsilon": float(eps),
            "accuracy": accuracy_on(model, corrupted, loss_mode),
        })
    return rows


ABLATION_VARIANTS = (
    ("full", ()),
    ("no_series", ("series",)),
    ("no_global", ("global",)),
    ("no_transformer", ("transformer",)),
)


def ablation_run(model_config: ModelConfig, train_pairs, test_pairs,
                 train_config: TrainConfig, variants=ABLATION_VARIANTS,
                 noise_epsilon=0.5):
    """Train one model per branch-disabling variant from the same seed and
    report clean and noisy-series test accuracy for each."""
    corrupted = corrupt_pairs(test_pairs, "series", noise_epsilon,
                              train_config.seed, model_config.image_size)
    rows = []
    for name, disabled in variants:
        model = FusionModel(model_config, seed=train_config.seed)
        model.set_disabled(disabled)
        train(model, train_pairs, train_config)
        rows.append({
            "variant": name,
            "disabled": "+".join(sorted(disabled)) if disabled else "none",
            "accuracy": accuracy_on(model, test_pairs, train_config.loss_mode),
            "noisy_accuracy": accuracy_on(model, corrupted,
                                          train_config.loss_mode),
        })
    return rows
