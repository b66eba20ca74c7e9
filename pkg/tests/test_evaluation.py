"""Robustness scoring (area under a normalized polyline), feature
divergence, and test-set corruption semantics."""

from __future__ import annotations

import numpy as np
import pytest

from gafdiag.dataset import build_synthetic_dataset
from gafdiag.errors import (
    DegenerateRectangleError,
    DomainError,
    InsufficientPointsError,
    SupportMismatchError,
)
from gafdiag.evaluation import (
    align_features,
    ap_from_sweep,
    ap_polyline,
    corrupt_pair,
    corrupt_pairs,
    feature_to_distribution,
    kl_divergence,
)
from gafdiag.util import derive_rng


def brute_force_ap(xs, ys):
    """Trapezoid rule written out longhand, normalized the same way."""
    area = 0.0
    for i in range(len(xs) - 1):
        area += 0.5 * (ys[i] + ys[i + 1]) * (xs[i + 1] - xs[i])
    return area / (xs[-1] * max(ys))


def test_ap_known_example():
    value = ap_polyline([(0.0, 1.0), (1.0, 0.8), (2.0, 0.2)])
    # trapezoids: 0.9 + 0.5 over a 2 x 1 rectangle
    assert abs(value - 0.7) < 1e-12


def test_ap_horizontal_line_is_one():
    for level in (0.3, 1.0, 7.5):
        value = ap_polyline([(0.0, level), (0.5, level), (2.0, level)])
        assert abs(value - 1.0) < 1e-12


def test_ap_matches_brute_force_on_random_polylines():
    rng = np.random.default_rng(31)
    for _ in range(300):
        n = int(rng.integers(2, 12))
        xs = np.cumsum(rng.uniform(0.1, 1.0, n))
        ys = rng.uniform(0.0, 5.0, n)
        if ys.max() == 0.0:
            ys[0] = 1.0
        got = ap_polyline(list(zip(xs, ys)))
        want = brute_force_ap(list(xs), list(ys))
        assert abs(got - want) < 1e-12


def test_ap_rejects_bad_polylines():
    with pytest.raises(InsufficientPointsError):
        ap_polyline([(0.0, 1.0)])
    with pytest.raises(DomainError):
        ap_polyline([(0.0, 1.0), (0.0, 0.5)])  # x not strictly increasing
    with pytest.raises(DomainError):
        ap_polyline([(0.0, 1.0), (1.0, -0.1)])
    with pytest.raises(DegenerateRectangleError):
        ap_polyline([(-1.0, 0.0), (0.0, 0.0)])


def test_ap_from_sweep_rows():
    rows = [
        {"epsilon": 0.0, "accuracy": 1.0},
        {"epsilon": 0.5, "accuracy": 0.9},
    ]
    assert abs(ap_from_sweep(rows) - 0.95) < 1e-12


def test_align_features_pooling():
    a = np.array([1.0, 5.0, 2.0, 4.0, 3.0, 0.0])
    b = np.array([1.0, 2.0])
    pa, pb = align_features(a, b)
    # groups of 3: max(1,5,2)=5, max(4,3,0)=4
    assert np.array_equal(pa, [5.0, 4.0])
    assert np.array_equal(pb, b)
    same_a, same_b = align_features(b, b)
    assert np.array_equal(same_a, b) and np.array_equal(same_b, b)
    # uneven split: 5 -> 2 pools [0:2], [2:5]
    pa, _ = align_features(np.array([1.0, 9.0, 2.0, 3.0, 8.0]), b)
    assert np.array_equal(pa, [9.0, 8.0])
    with pytest.raises(SupportMismatchError):
        align_features(np.array([]), b)


def test_feature_to_distribution_softmax():
    values = np.array([1.0, 2.0, 3.0])
    dist = feature_to_distribution(values)
    expected = np.exp(values) / np.exp(values).sum()
    assert np.max(np.abs(dist - expected)) < 1e-12
    assert abs(dist.sum() - 1.0) < 1e-12
    # invariant to constant shifts, stable at large magnitudes
    shifted = feature_to_distribution(values + 1000.0)
    assert np.max(np.abs(dist - shifted)) < 1e-12
    with pytest.raises(DomainError):
        feature_to_distribution(np.array([1.0, np.inf]))


def test_kl_self_divergence_zero():
    rng = np.random.default_rng(7)
    for _ in range(20):
        p = feature_to_distribution(rng.normal(size=8))
        assert abs(kl_divergence(p, p)) < 1e-12


def test_kl_nonnegative_seeded_loop():
    rng = np.random.default_rng(8)
    for _ in range(1000):
        n = int(rng.integers(2, 16))
        p = feature_to_distribution(rng.normal(size=n))
        q = feature_to_distribution(rng.normal(size=n))
        assert kl_divergence(p, q) >= -1e-15


def test_kl_closed_form_case():
    # D((1,0) || (1/2,1/2)) = ln 2
    p = np.array([1.0, 0.0])
    q = np.array([0.5, 0.5])
    assert abs(kl_divergence(p, q) - np.log(2.0)) < 1e-12
    # textbook two-point case
    p2 = np.array([0.7, 0.3])
    q2 = np.array([0.4, 0.6])
    want = 0.7 * np.log(0.7 / 0.4) + 0.3 * np.log(0.3 / 0.6)
    assert abs(kl_divergence(p2, q2) - want) < 1e-12


def test_kl_floors_zero_denominators():
    p = np.array([0.5, 0.5])
    q = np.array([1.0, 0.0])
    value = kl_divergence(p, q)
    assert np.isfinite(value)
    assert value > 10.0  # dominated by the ln(0.5 / floor) term


def test_kl_input_validation():
    p = np.array([0.5, 0.5])
    with pytest.raises(SupportMismatchError):
        kl_divergence(p, np.array([1.0]))
    with pytest.raises(DomainError):
        kl_divergence(p, np.array([0.7, 0.7]))  # does not sum to 1
    with pytest.raises(DomainError):
        kl_divergence(np.array([1.5, -0.5]), p)


def corpus():
    train_pairs, test_pairs = build_synthetic_dataset(
        seed=0, windows_per_class=3, window_len=128, image_size=64
    )
    return train_pairs + test_pairs


def test_corrupt_pair_epsilon_zero_is_identity():
    pair = corpus()[0]
    rng = derive_rng(0, "x")
    assert corrupt_pair(pair, "series", 0.0, rng, 64) is pair
    assert corrupt_pair(pair, "image", 0.0, rng, 64) is pair


def test_corrupt_pair_series_rederives_image():
    pair = corpus()[0]
    out = corrupt_pair(pair, "series", 0.5, derive_rng(1, "c"), 64)
    assert out.label is pair.label
    assert not np.array_equal(out.window.values, pair.window.values)
    assert not np.array_equal(out.image.pixels, pair.image.pixels)
    # the image is the transform of the noisy window, not a pixel edit
    from gafdiag.transform import series_to_image

    assert np.array_equal(
        out.image.pixels, series_to_image(out.window.values, 64).pixels
    )


def test_corrupt_pair_image_mode_keeps_series():
    pair = corpus()[0]
    out = corrupt_pair(pair, "image", 0.2, derive_rng(2, "c"), 64)
    assert np.array_equal(out.window.values, pair.window.values)
    assert not np.array_equal(out.image.pixels, pair.image.pixels)
    changed = int(np.sum(out.image.pixels != pair.image.pixels))
    assert changed <= round(0.2 * 64 * 64)


def test_corrupt_pair_both_mode_layers_the_two():
    pair = corpus()[0]
    seeded = lambda: derive_rng(3, "c")
    both = corrupt_pair(pair, "both", 0.3, seeded(), 64)
    series_only = corrupt_pair(pair, "series", 0.3, seeded(), 64)
    # same stream: identical noisy window, image then perturbed further
    assert np.array_equal(both.window.values, series_only.window.values)
    assert not np.array_equal(both.image.pixels, series_only.image.pixels)
    with pytest.raises(DomainError):
        corrupt_pair(pair, "pixels", 0.3, seeded(), 64)


def test_corrupt_pairs_deterministic_per_item():
    pairs = corpus()[:6]
    a = corrupt_pairs(pairs, "series", 0.4, seed=9, image_size=64, eps_index=2)
    b = corrupt_pairs(pairs, "series", 0.4, seed=9, image_size=64, eps_index=2)
    for pa, pb in zip(a, b):
        assert np.array_equal(pa.window.values, pb.window.values)
        assert np.array_equal(pa.image.pixels, pb.image.pixels)
    # a different eps slot draws different noise
    c = corrupt_pairs(pairs, "series", 0.4, seed=9, image_size=64, eps_index=3)
    assert not np.array_equal(a[0].window.values, c[0].window.values)
