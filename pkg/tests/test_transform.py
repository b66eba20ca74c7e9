"""Imaging pipeline: scaling, polar encoding, the angular-field matrix,
quantization, subsampling, and the PGM/CSV writers."""

from __future__ import annotations

import numpy as np
import pytest

from gafdiag.errors import ConstantSeriesError, DomainError, TooShortError
from gafdiag.transform import (
    GafMatrix,
    gaf_matrix,
    minmax_scale,
    modified_inner,
    penalty,
    penalty_grad,
    pixels_to_unit,
    polar_encode,
    read_pgm,
    series_to_image,
    subsample,
    to_gray,
    write_gaf_csv,
    write_pgm,
)


def test_minmax_scale_endpoints_and_range():
    rng = np.random.default_rng(11)
    for _ in range(50):
        values = rng.normal(0.0, 3.0, size=rng.integers(2, 200))
        scaled = minmax_scale(values)
        assert scaled.values.min() == 0.0
        assert scaled.values.max() == 1.0
        assert np.all((scaled.values >= 0.0) & (scaled.values <= 1.0))
        assert scaled.original_min == values.min()
        assert scaled.original_max == values.max()


def test_minmax_scale_is_affine():
    values = np.array([3.0, 7.0, 5.0, 11.0])
    scaled = minmax_scale(values)
    expected = (values - 3.0) / 8.0
    assert np.allclose(scaled.values, expected, atol=1e-15)


def test_minmax_scale_rejects_constant_and_short():
    with pytest.raises(ConstantSeriesError):
        minmax_scale(np.full(16, 2.5))
    with pytest.raises(TooShortError):
        minmax_scale(np.array([1.0]))
    with pytest.raises(TooShortError):
        minmax_scale(np.array([]))


def test_polar_encode_angles_and_radii():
    scaled = minmax_scale(np.linspace(-1.0, 1.0, 9))
    enc = polar_encode(scaled)
    assert np.allclose(enc.phi, np.arccos(scaled.values))
    assert np.all((enc.phi >= 0.0) & (enc.phi <= np.pi))
    assert np.allclose(enc.r, np.arange(1, 10) / 9.0)


def test_modified_inner_matches_angle_sum():
    # x.y - sqrt(1-x^2)sqrt(1-y^2) == cos(arccos x + arccos y)
    rng = np.random.default_rng(7)
    xs = rng.uniform(0.0, 1.0, 10_000)
    ys = rng.uniform(0.0, 1.0, 10_000)
    for x, y in zip(xs, ys):
        direct = modified_inner(x, y)
        via_angles = np.cos(np.arccos(x) + np.arccos(y))
        assert abs(direct - via_angles) < 1e-10


def test_modified_inner_rejects_out_of_domain():
    with pytest.raises(DomainError):
        modified_inner(1.5, 0.0)
    with pytest.raises(DomainError):
        modified_inner(0.0, -1.1)


def test_penalty_matches_product_gap():
    rng = np.random.default_rng(13)
    for _ in range(500):
        x, y = rng.uniform(0.0, 1.0, 2)
        assert abs(penalty(x, y) - (modified_inner(x, y) - x * y)) < 1e-12


def test_penalty_largest_at_zero():
    assert penalty(0.0, 0.0) == -1.0
    assert abs(penalty(1.0, 0.3)) < 1e-12
    assert abs(penalty(0.4, 1.0)) < 1e-12


def test_penalty_grad_against_finite_differences():
    rng = np.random.default_rng(5)
    h = 1e-6
    for _ in range(200):
        x, y = rng.uniform(0.05, 0.95, 2)
        gx, gy = penalty_grad(x, y)
        fx = (penalty(x + h, y) - penalty(x - h, y)) / (2 * h)
        fy = (penalty(x, y + h) - penalty(x, y - h)) / (2 * h)
        assert abs(gx - fx) / max(abs(fx), 1e-6) < 1e-5
        assert abs(gy - fy) / max(abs(fy), 1e-6) < 1e-5


def test_gaf_matrix_symmetry_diagonal_and_bounds():
    rng = np.random.default_rng(3)
    for _ in range(20):
        scaled = minmax_scale(rng.normal(size=48))
        matrix = gaf_matrix(scaled).entries
        assert np.array_equal(matrix, matrix.T)  # bitwise symmetric
        x = scaled.values
        assert np.allclose(np.diag(matrix), 2.0 * x * x - 1.0, atol=1e-12)
        assert matrix.min() >= -1.0 - 1e-12
        assert matrix.max() <= 1.0 + 1e-12


def test_gaf_matrix_equals_angle_sum_cosines():
    scaled = minmax_scale(np.random.default_rng(9).normal(size=32))
    matrix = gaf_matrix(scaled).entries
    phi = np.arccos(scaled.values)
    expected = np.cos(phi[:, None] + phi[None, :])
    assert np.allclose(matrix, expected, atol=1e-10)


def test_to_gray_endpoints():
    matrix = GafMatrix(entries=np.array([[-1.0, 0.0], [0.0, 1.0]]))
    gray = to_gray(matrix)
    assert gray.pixels[0, 0] == 0
    assert gray.pixels[1, 1] == 255
    assert gray.pixels[0, 1] == 128  # 127.5 rounds away from zero


def test_to_gray_monotone():
    values = np.linspace(-1.0, 1.0, 101)
    matrix = GafMatrix(entries=np.tile(values, (101, 1)))
    gray = to_gray(matrix).pixels
    assert np.all(np.diff(gray[0].astype(int)) >= 0)


def test_subsample_identity_and_stride():
    values = np.arange(12, dtype=float)
    assert np.array_equal(subsample(values, 12), values)
    assert np.array_equal(subsample(values, 4), values[[0, 3, 6, 9]])
    assert subsample(values, 5).size == 5


def test_subsample_rejects_upsampling():
    with pytest.raises(TooShortError):
        subsample(np.arange(4, dtype=float), 8)


def test_series_to_image_shape_and_determinism():
    rng = np.random.default_rng(21)
    series = rng.normal(size=256)
    image1 = series_to_image(series, 64)
    image2 = series_to_image(series, 64)
    assert image1.pixels.shape == (64, 64)
    assert image1.pixels.dtype == np.uint8
    assert np.array_equal(image1.pixels, image2.pixels)


def test_pgm_round_trip_and_layout(tmp_path):
    image = series_to_image(np.random.default_rng(2).normal(size=64), 64)
    path = tmp_path / "img.pgm"
    write_pgm(image, path)
    blob = path.read_bytes()
    header = b"P5\n64 64\n255\n"
    assert blob.startswith(header)
    assert len(blob) == len(header) + 64 * 64
    back = read_pgm(path)
    assert np.array_equal(back.pixels, image.pixels)


def test_gaf_csv_full_precision(tmp_path):
    scaled = minmax_scale(np.random.default_rng(4).normal(size=16))
    matrix = gaf_matrix(scaled)
    path = tmp_path / "gaf.csv"
    write_gaf_csv(matrix, path)
    rows = path.read_text().strip().splitlines()
    parsed = np.array([[float(cell) for cell in row.split(",")] for row in rows])
    assert np.array_equal(parsed, matrix.entries)  # repr round-trips exactly


def test_pixels_to_unit_bounds():
    pixels = np.array([[0, 128, 255]], dtype=np.uint8)
    unit = pixels_to_unit(pixels)
    assert unit[0, 0] == -1.0
    assert unit[0, 2] == 1.0
    assert abs(unit[0, 1] - (2 * 128 / 255 - 1)) < 1e-15
