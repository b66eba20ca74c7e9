"""Dataset expansion by calibrated noise.

Series side: zero-mean Gaussian noise whose standard deviation is a fixed
fraction (the noise percentage eps) of the signal RMS, so that
SNR_dB = 20*log10(1/eps).

Image side: the forward-diffusion construction
x_t = sqrt(abar_t) * x_0 + sqrt(1 - abar_t) * eps with a linear noise
schedule, plus a simpler disturbance-point corruption that resamples a
fraction of pixels uniformly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DomainError,
    EmptySeriesError,
    StepOutOfRangeError,
    ZeroSignalError,
)
from .transform import GrayImage, as_values, pixels_to_unit
from .util import round_count, round_half_away


def epsilon_to_snr(epsilon: float) -> float:
    """SNR in dB for a noise percentage: 20*log10(1/eps)."""
    if epsilon <= 0.0:
        raise DomainError("noise percentage must be > 0")
    return 20.0 * np.log10(1.0 / epsilon)


def snr_to_epsilon(snr_db: float) -> float:
    """Inverse of :func:`epsilon_to_snr`."""
    return 10.0 ** (-snr_db / 20.0)


def rms(series) -> float:
    """Root mean square (effective value)."""
    values = as_values(series)
    if values.size == 0:
        raise EmptySeriesError("rms of an empty series")
    return float(np.sqrt(np.mean(values * values)))


def noise_sigma(series, epsilon: float) -> float:
    """Standard deviation of calibrated noise: sigma = eps * rms(signal)."""
    if epsilon <= 0.0:
        raise DomainError("noise percentage must be > 0")
    signal_rms = rms(series)
    if signal_rms == 0.0:
        raise ZeroSignalError("cannot calibrate noise against an all-zero signal")
    return epsilon * signal_rms


def add_series_noise(series, epsilon: float, seed) -> np.ndarray:
    """Signal plus iid zero-mean Gaussian noise at sigma = eps * rms(signal).

    Deterministic for a given seed; accepts a Generator directly so callers
    can feed per-item derived streams.
    """
    values = as_values(series)
    sigma = noise_sigma(values, epsilon)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return values + rng.normal(0.0, sigma, size=values.shape)


@dataclass
class NoiseSchedule:
    """Per-step retention factors alpha_t and their running product abar_t.

    ``alpha_bar`` is strictly decreasing for any schedule built by
    :func:`make_schedule`; tests may construct degenerate all-ones schedules
    directly to exercise identity behavior.
    """

    alpha: np.ndarray
    alpha_bar: np.ndarray

    @property
    def steps(self) -> int:
        return self.alpha.size


def make_schedule(steps: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    """Linear beta ramp; alpha_t = 1 - beta_t, abar_t = prod alpha_s."""
    if steps < 1:
        raise DomainError("schedule needs at least one step")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise DomainError("require 0 < beta_start <= beta_end < 1")
    beta = np.linspace(beta_start, beta_end, steps)
    alpha = 1.0 - beta
    return NoiseSchedule(alpha=alpha, alpha_bar=np.cumprod(alpha))


def _check_step(t: int, schedule: NoiseSchedule) -> None:
    if not 1 <= t <= schedule.steps:
        raise StepOutOfRangeError(f"step {t} outside 1..{schedule.steps}")


def diffuse_field(x0: np.ndarray, t: int, schedule: NoiseSchedule, rng) -> np.ndarray:
    """Closed-form forward noising of a real-valued field (no clamping)."""
    _check_step(t, schedule)
    abar = schedule.alpha_bar[t - 1]
    noise = rng.standard_normal(x0.shape)
    return np.sqrt(abar) * x0 + np.sqrt(1.0 - abar) * noise


def stepwise_diffuse_field(x0: np.ndarray, t: int, schedule: NoiseSchedule, rng) -> np.ndarray:
    """Apply the one-step recursion x_t = sqrt(a_t) x_{t-1} + sqrt(1-a_t) e
    t times; exists to validate the closed form."""
    _check_step(t, schedule)
    x = x0
    for step in range(t):
        a = schedule.alpha[step]
        x = np.sqrt(a) * x + np.sqrt(1.0 - a) * rng.standard_normal(x0.shape)
    return x


def _field_to_image(field: np.ndarray) -> GrayImage:
    clamped = np.clip(field, -1.0, 1.0)
    pixels = round_half_away(255.0 * (clamped + 1.0) / 2.0)
    return GrayImage(pixels=np.clip(pixels, 0, 255).astype(np.uint8))


def diffuse_image(image: GrayImage, t: int, schedule: NoiseSchedule, seed) -> GrayImage:
    """Forward-noise a gray image: pixels to [-1, 1], closed-form noising,
    clamp, re-quantize with the same rounding rule as the imaging step."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    field = diffuse_field(pixels_to_unit(image.pixels), t, schedule, rng)
    return _field_to_image(field)


def stepwise_diffuse(image: GrayImage, t: int, schedule: NoiseSchedule, seed) -> GrayImage:
    """Recursion-based counterpart of :func:`diffuse_image`."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    field = stepwise_diffuse_field(pixels_to_unit(image.pixels), t, schedule, rng)
    return _field_to_image(field)


def perturb_image(image: GrayImage, fraction: float, seed) -> GrayImage:
    """Replace round(fraction * N^2) distinct pixels with uniform values in
    [0, 255]."""
    if not 0.0 <= fraction <= 1.0:
        raise DomainError("perturbation fraction must lie in [0, 1]")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = image.size
    count = round_count(fraction * n * n)
    pixels = image.pixels.copy()
    if count:
        flat = rng.choice(n * n, size=count, replace=False)
        pixels.reshape(-1)[flat] = rng.integers(0, 256, size=count, dtype=np.int64)
    return GrayImage(pixels=pixels)
