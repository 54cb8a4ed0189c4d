"""Input validation helpers shared across the toolkit."""

from __future__ import annotations

import numpy as np


def as_float_vector(x, name: str = "x") -> np.ndarray:
    """Coerce to a 1-D float64 array, rejecting empty or non-finite input."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_clip(clip) -> None:
    """Validate an AudioClip against its invariants."""
    if clip.samples.size == 0:
        raise ValueError(f"clip {clip.id!r} has no samples")
    if clip.sample_rate <= 0:
        raise ValueError(f"clip {clip.id!r} has non-positive sample rate")
    if not np.all(np.isfinite(clip.samples)):
        raise ValueError(f"clip {clip.id!r} contains non-finite samples")


def check_clips(clips, minimum: int = 1):
    clips = list(clips)
    if len(clips) < minimum:
        raise ValueError(f"need at least {minimum} clip(s), got {len(clips)}")
    for clip in clips:
        check_clip(clip)
    return clips


def check_same_rate(clips) -> int:
    """All clips must share one sample rate; returns it."""
    rates = sorted({clip.sample_rate for clip in clips})
    if len(rates) != 1:
        raise ValueError(f"mixed sample rates in batch: {rates}")
    return rates[0]


def check_equal_length(a: np.ndarray, b: np.ndarray, what: str = "signals") -> None:
    if len(a) != len(b):
        raise ValueError(f"{what} differ in length: {len(a)} vs {len(b)}")
