"""Seeded synthetic voices for demos and desk-scale evaluation.

Each "speaker" is a multi-harmonic tone with its own fundamental,
spectral envelope, vibrato and amplitude contour, plus a little breath
noise. These are nowhere near real speech, but they give the embedding
model distinct spectral identities to protect, deterministically.
"""

from __future__ import annotations

import numpy as np

from .audio_io import AudioClip


def harmonic_voice(
    speaker: int,
    duration: float,
    sample_rate: int = 16000,
    seed: int = 0,
) -> AudioClip:
    """One clip of a synthetic harmonic speaker."""
    rng = np.random.default_rng((seed, speaker))
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate

    f0 = 90.0 * 2.0 ** (speaker % 7 / 5.0) + rng.uniform(-3.0, 3.0)
    vibrato = 1.0 + 0.004 * np.sin(2.0 * np.pi * rng.uniform(4.0, 7.0) * t)
    phase = 2.0 * np.pi * np.cumsum(f0 * vibrato) / sample_rate

    formant_centers = rng.uniform(300.0, 3400.0, size=3)
    formant_widths = rng.uniform(80.0, 300.0, size=3)
    signal = np.zeros(n)
    for k in range(1, 17):
        freq = k * f0
        if freq >= sample_rate / 2:
            break
        envelope = (1.0 / k) * (
            0.2 + np.exp(-((freq - formant_centers) ** 2) / (2 * formant_widths**2)).sum()
        )
        signal += envelope * np.sin(k * phase + rng.uniform(0, 2 * np.pi))

    contour = 0.6 + 0.4 * np.sin(2.0 * np.pi * rng.uniform(0.7, 1.6) * t + rng.uniform(0, 2 * np.pi))
    signal *= contour
    signal += 0.003 * rng.standard_normal(n)
    signal *= 0.35 / np.max(np.abs(signal))
    return AudioClip(signal, sample_rate, id=f"speaker{speaker:02d}")


def synthetic_corpus(
    n_clips: int = 12,
    sample_rate: int = 16000,
    duration_range: tuple[float, float] = (1.0, 2.0),
    seed: int = 0,
) -> list[AudioClip]:
    """A deterministic corpus of distinct synthetic speakers."""
    rng = np.random.default_rng(seed)
    lo, hi = duration_range
    return [
        harmonic_voice(i, duration=rng.uniform(lo, hi), sample_rate=sample_rate, seed=seed)
        for i in range(n_clips)
    ]
