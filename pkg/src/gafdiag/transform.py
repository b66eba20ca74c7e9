"""Angular-field imaging of vibration series.

A window is min-max scaled to [0, 1], mapped to polar angles, expanded into
a symmetric matrix through a modified inner product

    x (.) y = x*y - sqrt(1 - x^2) * sqrt(1 - y^2)

(equal to cos(arccos x + arccos y)), and quantized to an 8-bit grayscale
image.  The subtracted square-root term acts as a penalty that is strongest
for near-zero, noise-like samples, which is what makes the resulting images
sparse instead of mid-gray.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConstantSeriesError, DomainError, TooShortError
from .util import atomic_write_bytes, atomic_write_text, round_half_away


@dataclass
class RawSeries:
    """A one-dimensional vibration record; ``sample_rate`` is metadata only."""

    values: np.ndarray
    sample_rate: float = 1.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or self.values.size < 2:
            raise TooShortError("series must be one-dimensional with length >= 2")
        if not np.all(np.isfinite(self.values)):
            raise DomainError("series contains NaN or Inf")


@dataclass
class ScaledSeries:
    """Series mapped affinely onto [0, 1], remembering the original range."""

    values: np.ndarray
    original_min: float
    original_max: float


@dataclass
class PolarEncoding:
    """Angles phi = arccos(value) and radii r_i = i/N, i = 1..N."""

    phi: np.ndarray
    r: np.ndarray


@dataclass
class GafMatrix:
    """Symmetric N x N matrix of pairwise modified inner products."""

    entries: np.ndarray

    @property
    def size(self) -> int:
        return self.entries.shape[0]


@dataclass
class GrayImage:
    """N x N unsigned 8-bit image."""

    pixels: np.ndarray = field()

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.uint8)
        if self.pixels.ndim != 2 or self.pixels.shape[0] != self.pixels.shape[1]:
            raise DomainError("image must be a square 2-D array")

    @property
    def size(self) -> int:
        return self.pixels.shape[0]


def as_values(series) -> np.ndarray:
    """Accept a RawSeries or any array-like; return a float64 vector."""
    if isinstance(series, RawSeries):
        return series.values
    return np.asarray(series, dtype=np.float64)


def minmax_scale(series) -> ScaledSeries:
    """Map the series affinely so its minimum hits 0 and its maximum hits 1.

    Equivalent to scaling into [-1, 1] and then linearly into [0, 1] in one
    step.  Raises ConstantSeriesError when max == min, since the scaling is
    undefined there and an all-constant window usually means a dead sensor.
    """
    values = as_values(series)
    if values.size < 2:
        raise TooShortError("need at least 2 samples to scale")
    if not np.all(np.isfinite(values)):
        raise DomainError("series contains NaN or Inf")
    lo = float(values.min())
    hi = float(values.max())
    if hi == lo:
        raise ConstantSeriesError(f"constant series (all values = {lo})")
    scaled = (values - lo) / (hi - lo)
    return ScaledSeries(values=scaled, original_min=lo, original_max=hi)


def polar_encode(scaled: ScaledSeries) -> PolarEncoding:
    """phi_i = arccos(x_i), r_i = i/N for i = 1..N."""
    values = np.asarray(scaled.values, dtype=np.float64)
    if values.size and (values.min() < 0.0 or values.max() > 1.0):
        raise DomainError("scaled values must lie in [0, 1]")
    n = values.size
    phi = np.arccos(values)
    r = np.arange(1, n + 1, dtype=np.float64) / n
    return PolarEncoding(phi=phi, r=r)


def modified_inner(x: float, y: float) -> float:
    """x*y - sqrt(1-x^2)*sqrt(1-y^2), defined on [-1, 1]^2.

    Identical to cos(arccos x + arccos y); the subtracted term is the
    sparsity penalty (see :func:`penalty`).
    """
    if abs(x) > 1.0 or abs(y) > 1.0:
        raise DomainError("modified inner product requires |x|, |y| <= 1")
    return x * y - np.sqrt(1.0 - x * x) * np.sqrt(1.0 - y * y)


def penalty(x: float, y: float) -> float:
    """-sqrt((1-x^2)(1-y^2)): the gap between the modified and plain product.

    Always <= 0, with the largest magnitude at x = y = 0, i.e. for samples
    that look most like zero-mean noise.
    """
    if abs(x) > 1.0 or abs(y) > 1.0:
        raise DomainError("penalty requires |x|, |y| <= 1")
    return -np.sqrt((1.0 - x * x) * (1.0 - y * y))


def penalty_grad(x: float, y: float):
    """Closed-form partials of :func:`penalty` at an interior point."""
    root = np.sqrt((1.0 - x * x) * (1.0 - y * y))
    if root == 0.0:
        raise DomainError("penalty gradient undefined on the domain boundary")
    return x * (1.0 - y * y) / root, y * (1.0 - x * x) / root


def gaf_matrix(scaled: ScaledSeries) -> GafMatrix:
    """Pairwise modified inner products of the scaled series with itself.

    Computed as outer(x, x) - outer(s, s) with s = sqrt(1 - x^2), which is
    bitwise symmetric because IEEE multiplication commutes.
    """
    values = np.asarray(scaled.values, dtype=np.float64)
    if values.size and (values.min() < 0.0 or values.max() > 1.0):
        raise DomainError("scaled values must lie in [0, 1]")
    comp = np.sqrt(1.0 - values * values)
    entries = np.outer(values, values) - np.outer(comp, comp)
    return GafMatrix(entries=entries)


def to_gray(matrix: GafMatrix) -> GrayImage:
    """Quantize entries in [-1, 1] to pixels: round(255*(g+1)/2), ties away
    from zero, so -1 -> 0, 0 -> 128, 1 -> 255."""
    entries = np.asarray(matrix.entries, dtype=np.float64)
    pixels = round_half_away(255.0 * (entries + 1.0) / 2.0)
    return GrayImage(pixels=np.clip(pixels, 0, 255).astype(np.uint8))


def subsample(values: np.ndarray, target_len: int) -> np.ndarray:
    """Evenly spaced subsampling down to ``target_len`` points.

    Uses index floor(k * L / target_len); for L = 2 * target_len this takes
    every second point.
    """
    values = np.asarray(values)
    length = values.size
    if length < target_len:
        raise TooShortError(f"series of length {length} cannot fill {target_len} points")
    if length == target_len:
        return values
    idx = (np.arange(target_len, dtype=np.int64) * length) // target_len
    return values[idx]


def series_to_image(series, target_size: int) -> GrayImage:
    """Full pipeline: subsample -> scale -> angular-field matrix -> gray image."""
    values = as_values(series)
    if values.size < target_size:
        raise TooShortError(
            f"series of length {values.size} is shorter than image size {target_size}"
        )
    picked = subsample(values, target_size)
    return to_gray(gaf_matrix(minmax_scale(picked)))


# ---------------------------------------------------------------------------
# serialization

PGM_MAXVAL = 255


def write_pgm(image: GrayImage, path) -> None:
    """Binary PGM: magic P5, dimensions, maxval 255, row-major pixel bytes."""
    n = image.size
    header = f"P5\n{n} {n}\n{PGM_MAXVAL}\n".encode("ascii")
    atomic_write_bytes(path, header + image.pixels.tobytes())


def read_pgm(path) -> GrayImage:
    with open(path, "rb") as handle:
        data = handle.read()
    if not data.startswith(b"P5"):
        raise DomainError(f"{path}: not a binary PGM (P5) file")
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":  # comment line
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(int(data[start:pos]))
    pos += 1  # single whitespace after maxval
    width, height, maxval = fields
    if maxval != PGM_MAXVAL:
        raise DomainError(f"{path}: unsupported maxval {maxval}")
    pixels = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
    return GrayImage(pixels=pixels.reshape(height, width).copy())


def write_gaf_csv(matrix: GafMatrix, path) -> None:
    """N rows of N comma-separated full-precision reals."""
    lines = [",".join(repr(float(v)) for v in row) for row in matrix.entries]
    atomic_write_text(path, "\n".join(lines) + "\n")


def pixels_to_unit(pixels: np.ndarray) -> np.ndarray:
    """Map 8-bit pixels back to reals in [-1, 1] (inverse of quantization
    up to 1/255)."""
    return 2.0 * np.asarray(pixels, dtype=np.float64) / 255.0 - 1.0
