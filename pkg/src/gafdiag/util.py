"""Small shared helpers: rounding, seeding, atomic file writes."""

from __future__ import annotations

import hashlib
import math
import os
import tempfile
from pathlib import Path

import numpy as np


def round_half_away(x):
    """Round to nearest integer, ties away from zero (vectorized).

    Python's built-in round() is banker's rounding; image quantization and
    count rounding in this package use the away-from-zero convention.
    """
    x = np.asarray(x)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def round_count(x: float) -> int:
    """Scalar round-half-away for non-negative counts."""
    return int(math.floor(x + 0.5))


def _key_to_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFFFFFFFFFF
    digest = hashlib.sha256(str(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_rng(master_seed: int, *keys) -> np.random.Generator:
    """Deterministic per-item random stream.

    Mixes the master seed with any number of integer or string keys through
    SHA-256 into a SeedSequence, so results do not depend on how work is
    scheduled across items.
    """
    entropy = [int(master_seed) & 0xFFFFFFFFFFFFFFFF] + [_key_to_int(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def atomic_write_bytes(path, data: bytes) -> None:
    """Write a file via temp-and-rename so failures leave no partial output."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_csv(path, header, rows) -> None:
    """CSV with a header row, LF line endings, values via repr-free str()."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_format_cell(cell) for cell in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def _format_cell(cell) -> str:
    # np.float64 subclasses float but reprs as np.float64(...); cast first
    if isinstance(cell, (float, np.floating)):
        return repr(float(cell))
    return str(cell)


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
