"""Labeled desk-scale datasets.

The synthetic generator stands in for an instrumented test rig: the normal
condition is a shaft-frequency sinusoid over a small Gaussian floor, and
each fault condition adds a periodic train of exponentially decaying
impulses at a class-specific defect frequency (conventional ratios of the
shaft speed).  Real data arrives through one-value-per-line CSV exports.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (
    ClassTooSmallError,
    DomainError,
    EmptyFileError,
    InsufficientDurationError,
    ParseError,
    TooShortError,
)
from .transform import GrayImage, RawSeries, series_to_image
from .util import derive_rng, round_count, write_csv


class ClassLabel(enum.Enum):
    Normal = 0
    InnerRace = 1
    OuterRace = 2
    Ball = 3


# Defect frequency as a multiple of shaft frequency; standard ballpark
# ratios for a rolling bearing geometry.
FAULT_FREQ_RATIO = {
    ClassLabel.InnerRace: 5.4,
    ClassLabel.OuterRace: 3.6,
    ClassLabel.Ball: 4.7,
}


def binary_target(label: ClassLabel) -> float:
    """Normal -> 0, any fault -> 1."""
    return 0.0 if label is ClassLabel.Normal else 1.0


@dataclass
class TimeWindow:
    values: np.ndarray
    label: ClassLabel
    source_id: str
    offset: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)


@dataclass
class SyntheticSpec:
    """Parameters of the synthetic rig signal."""

    shaft_freq: float = 16.0
    fault_freq: float = 86.4
    impulse_decay: float = 2000.0
    impulse_amplitude: float = 2.2
    base_noise_epsilon: float = 0.05
    sample_rate: float = 2048.0
    duration: float = 8.0

    def __post_init__(self):
        if min(self.shaft_freq, self.fault_freq, self.sample_rate, self.duration) <= 0:
            raise DomainError("rates and duration must be positive")
        if self.fault_freq >= self.sample_rate / 2.0:
            raise DomainError("fault frequency must be below Nyquist")

    @classmethod
    def for_label(cls, label: ClassLabel, **overrides) -> "SyntheticSpec":
        spec = cls(**overrides)
        if label in FAULT_FREQ_RATIO and "fault_freq" not in overrides:
            spec = replace(spec, fault_freq=FAULT_FREQ_RATIO[label] * spec.shaft_freq)
        return spec


@dataclass
class PairedSample:
    window: TimeWindow
    image: GrayImage
    label: ClassLabel


def synthetic_signal(spec: SyntheticSpec, label: ClassLabel, seed) -> np.ndarray:
    """One continuous signal realization for the given condition.

    The sinusoid phase is derived from the seed alone so that different
    labels under the same seed share the shaft motion and differ only by
    the impulse train and their own noise draw.
    """
    fs = spec.sample_rate
    total = int(round(spec.duration * fs))
    phase = float(derive_rng(seed, "phase").uniform(0.0, 2.0 * np.pi))
    t = np.arange(total) / fs
    signal = np.sin(2.0 * np.pi * spec.shaft_freq * t + phase)

    if label is not ClassLabel.Normal and spec.impulse_amplitude != 0.0:
        # Exponential-decay kernel, truncated where it falls below 1e-8.
        span = int(np.ceil(fs * np.log(1e8) / spec.impulse_decay)) + 1
        kernel = spec.impulse_amplitude * np.exp(
            -spec.impulse_decay * np.arange(span) / fs
        )
        n_impulses = int(np.floor(spec.duration * spec.fault_freq)) + 1
        for k in range(n_impulses):
            onset = int(round(k * fs / spec.fault_freq))
            if onset >= total:
                break
            stop = min(onset + span, total)
            signal[onset:stop] += kernel[: stop - onset]

    if spec.base_noise_epsilon > 0.0:
        clean_rms = float(np.sqrt(np.mean(signal * signal)))
        rng = derive_rng(seed, "floor", label.name)
        signal = signal + rng.normal(0.0, spec.base_noise_epsilon * clean_rms, total)
    return signal


def generate_synthetic(
    spec: SyntheticSpec,
    label: ClassLabel,
    n_windows: int,
    window_len: int,
    seed,
) -> list[TimeWindow]:
    """Cut ``n_windows`` non-overlapping windows from one signal realization."""
    if n_windows < 1:
        raise DomainError("need at least one window")
    total = int(round(spec.duration * spec.sample_rate))
    if n_windows * window_len > total:
        raise InsufficientDurationError(
            f"{n_windows} x {window_len} samples exceed signal length {total}"
        )
    signal = synthetic_signal(spec, label, seed)
    source = f"synth-{label.name.lower()}-s{seed}"
    windows = []
    for k in range(n_windows):
        start = k * window_len
        windows.append(
            TimeWindow(
                values=signal[start : start + window_len].copy(),
                label=label,
                source_id=source,
                offset=start,
            )
        )
    return windows


def load_csv(path) -> RawSeries:
    """Parse a one-value-per-line CSV export.

    A single leading header line (first token non-numeric) is skipped;
    blank lines are ignored; anything else non-numeric raises ParseError
    with its line number.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    values = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped:
            continue
        try:
            values.append(float(stripped))
        except ValueError:
            if lineno == 1 and not values:
                continue  # header line
            raise ParseError(f"{path}:{lineno}: not a number: {stripped!r}", line=lineno)
    if not values:
        raise EmptyFileError(f"{path}: no data rows")
    return RawSeries(values=np.asarray(values, dtype=np.float64))


def window_series(series, window_len: int, stride: int, label=None, source_id="series") -> list[TimeWindow]:
    """Windows at offsets 0, stride, 2*stride, ...;
    count = floor((len - window_len)/stride) + 1."""
    values = series.values if isinstance(series, RawSeries) else np.asarray(series, dtype=np.float64)
    if stride < 1:
        raise DomainError("stride must be >= 1")
    if window_len > values.size:
        raise TooShortError(
            f"window {window_len} longer than series {values.size}"
        )
    count = (values.size - window_len) // stride + 1
    return [
        TimeWindow(
            values=values[k * stride : k * stride + window_len].copy(),
            label=label,
            source_id=source_id,
            offset=k * stride,
        )
        for k in range(count)
    ]


def stratified_split(samples, test_fraction: float, seed):
    """Per-class split with test counts round(class_count * fraction).

    Deterministic for a given seed; every class must have at least two
    samples.
    """
    if not 0.0 < test_fraction < 1.0:
        raise DomainError("test fraction must lie in (0, 1)")
    by_class = {}
    for idx, sample in enumerate(samples):
        by_class.setdefault(sample.label, []).append(idx)
    train_idx, test_idx = [], []
    for label in sorted(by_class, key=lambda l: l.value):
        members = by_class[label]
        if len(members) < 2:
            raise ClassTooSmallError(f"class {label.name} has {len(members)} sample(s)")
        order = derive_rng(seed, "split", label.name).permutation(len(members))
        n_test = round_count(len(members) * test_fraction)
        n_test = min(n_test, len(members) - 1)  # keep at least one train sample
        for pos, member_pos in enumerate(order):
            (test_idx if pos < n_test else train_idx).append(members[member_pos])
    train_idx.sort()
    test_idx.sort()
    return [samples[i] for i in train_idx], [samples[i] for i in test_idx]


def assemble_pairs(windows, image_size: int) -> list[PairedSample]:
    """Pair each window with its angular-field image."""
    return [
        PairedSample(
            window=w,
            image=series_to_image(w.values, image_size),
            label=w.label,
        )
        for w in windows
    ]


def build_synthetic_dataset(
    seed,
    windows_per_class: int = 125,
    window_len: int = 128,
    image_size: int = 64,
    test_fraction: float = 0.2,
    spec_overrides: dict | None = None,
):
    """Balanced four-condition dataset, stratified into train/test pairs.

    The defaults give 500 windows -> 400 train / 100 test at fraction 0.2.
    """
    overrides = dict(spec_overrides or {})
    windows = []
    for label in ClassLabel:
        spec = SyntheticSpec.for_label(label, **overrides)
        windows.extend(generate_synthetic(spec, label, windows_per_class, window_len, seed))
    train_w, test_w = stratified_split(windows, test_fraction, seed)
    return assemble_pairs(train_w, image_size), assemble_pairs(test_w, image_size)


def write_manifest(path, train, test) -> None:
    """Dataset manifest CSV: source_id, label, split, window_offset."""
    rows = []
    for split_name, split_samples in (("train", train), ("test", test)):
        for sample in split_samples:
            window = sample.window if isinstance(sample, PairedSample) else sample
            rows.append((window.source_id, window.label.name, split_name, window.offset))
    write_csv(path, ("source_id", "label", "split", "window_offset"), rows)
