"""Differentiable STFT and multi-resolution mel-spectrogram pipeline.

Three canonical resolutions are used throughout the toolkit: FFT sizes
512, 1024 and 2048 with hop lengths 128, 256 and 512, all with 80 mel
bands and an 80 dB dynamic-range clamp. Conventions (documented because
they are configuration choices, not ground truth): periodic Hann window,
no centering (frame t starts at t * hop), zero padding at the tail, HTK
mel scale without area normalization, dB reference 1.0 with a 1e-10
power floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import autodiff as ad
from .autodiff import Node, Tape

LOG_FLOOR_AMIN = 1e-10
DB_PER_LOG = 10.0 / math.log(10.0)  # 10*log10(x) == DB_PER_LOG * ln(x)

CANONICAL_FFT_AND_HOP = ((512, 128), (1024, 256), (2048, 512))


@dataclass(frozen=True)
class MelConfig:
    """One STFT/mel resolution."""

    n_fft: int
    hop_length: int
    n_mels: int = 80
    sample_rate: int = 16000
    fmin: float = 0.0
    fmax: float | None = None
    top_db: float = 80.0

    def __post_init__(self):
        if self.n_fft < 2:
            raise ValueError("n_fft must be at least 2")
        if not 0 < self.hop_length <= self.n_fft:
            raise ValueError("hop_length must be in (0, n_fft]")
        if self.n_mels < 1:
            raise ValueError("n_mels must be at least 1")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        fmax = self.effective_fmax
        if not 0 <= self.fmin < fmax <= self.sample_rate / 2:
            raise ValueError(
                f"need 0 <= fmin < fmax <= sample_rate/2, got {self.fmin}, {fmax}"
            )
        if self.top_db <= 0:
            raise ValueError("top_db must be positive")

    @property
    def effective_fmax(self) -> float:
        return self.sample_rate / 2 if self.fmax is None else self.fmax

    @property
    def n_bins(self) -> int:
        return self.n_fft // 2 + 1


def canonical_configs(sample_rate: int) -> tuple[MelConfig, ...]:
    """The fixed (512,128), (1024,256), (2048,512) resolution set."""
    return tuple(
        MelConfig(n_fft=n, hop_length=h, sample_rate=sample_rate)
        for n, h in CANONICAL_FFT_AND_HOP
    )


def encoder_config(sample_rate: int) -> MelConfig:
    """The mid resolution, used as the speaker-embedding front end."""
    return MelConfig(n_fft=1024, hop_length=256, sample_rate=sample_rate)


def num_frames(n_samples: int, hop_length: int) -> int:
    return -(-n_samples // hop_length)  # ceil division


@lru_cache(maxsize=None)
def hann_window(n: int) -> np.ndarray:
    """Periodic Hann: w[k] = 0.5 * (1 - cos(2 pi k / n))."""
    if n < 2:
        raise ValueError("window length must be at least 2")
    w = 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(n) / n))
    w.flags.writeable = False
    return w


@lru_cache(maxsize=None)
def dft_matrices(n_fft: int) -> tuple[np.ndarray, np.ndarray]:
    """Real-input DFT as two (n_fft, n_fft//2+1) cosine/sine matrices."""
    k = np.arange(n_fft // 2 + 1)
    t = np.arange(n_fft)
    angles = 2.0 * np.pi * np.outer(t, k) / n_fft
    cos_m = np.cos(angles)
    sin_m = -np.sin(angles)
    cos_m.flags.writeable = False
    sin_m.flags.writeable = False
    return cos_m, sin_m


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=None)
def _filterbank_cached(cfg: MelConfig) -> np.ndarray:
    fft_freqs = np.arange(cfg.n_bins) * cfg.sample_rate / cfg.n_fft
    edges = mel_to_hz(
        np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.effective_fmax), cfg.n_mels + 2)
    )
    weights = np.zeros((cfg.n_mels, cfg.n_bins))
    for band in range(cfg.n_mels):
        lower, center, upper = edges[band], edges[band + 1], edges[band + 2]
        rising = (fft_freqs - lower) / (center - lower)
        falling = (upper - fft_freqs) / (upper - center)
        weights[band] = np.maximum(0.0, np.minimum(rising, falling))
        if not np.any(weights[band] > 0):
            raise ValueError(
                f"mel band {band} is degenerate: edges {lower:.1f}-{upper:.1f} Hz "
                f"fall between FFT bins (spacing {fft_freqs[1]:.1f} Hz)"
            )
    weights.flags.writeable = False
    return weights


def mel_filterbank(cfg: MelConfig) -> np.ndarray:
    """Triangular HTK-scale filters, (n_mels, n_fft//2+1), no normalization."""
    return _filterbank_cached(cfg)


@dataclass(frozen=True)
class Spectrogram:
    """Frames-by-bins values tagged with their kind and configuration."""

    values: np.ndarray
    kind: str  # magnitude | power | mel_power | mel_db
    config: MelConfig


# ---------------------------------------------------------------------------
# tape-based (differentiable) transforms


def stft_power(x: Node, cfg: MelConfig) -> Node:
    """Power spectrogram (frames, n_fft//2+1) of a waveform node.

    Frames start at multiples of hop_length and the tail is zero-padded
    to complete the final frame, so there are ceil(len/hop) frames.
    """
    n = x.value.size
    if n < cfg.n_fft:
        raise ValueError(f"input of {n} samples is shorter than one {cfg.n_fft} frame")
    frames = num_frames(n, cfg.hop_length)
    stacked = ad.frame_stack(x, cfg.n_fft, cfg.hop_length, frames)
    window = np.broadcast_to(hann_window(cfg.n_fft), (frames, cfg.n_fft))
    windowed = ad.elementwise_mul(stacked, x.tape.constant(window))
    cos_m, sin_m = dft_matrices(cfg.n_fft)
    real = ad.matmul(windowed, x.tape.constant(cos_m))
    imag = ad.matmul(windowed, x.tape.constant(sin_m))
    return ad.add(ad.square(real), ad.square(imag))


def mel_power(x: Node, cfg: MelConfig) -> Node:
    power = stft_power(x, cfg)
    return ad.matmul(power, x.tape.constant(mel_filterbank(cfg).T))


def mel_db(x: Node, cfg: MelConfig) -> Node:
    """dB-scaled mel spectrogram, clamped to [max - top_db, max].

    The clamp threshold is computed from the forward value and treated as
    a constant, so no gradient flows through the running maximum; entries
    at the dynamic-range floor receive zero gradient.
    """
    db = ad.scalar_scale(ad.log_floor(mel_power(x, cfg), LOG_FLOOR_AMIN), DB_PER_LOG)
    floor = float(np.max(db.value)) - cfg.top_db
    return ad.clamp_minmax(db, floor, None)


def multi_scale_mel(x: Node, sample_rate: int) -> list[Node]:
    """mel_db at each canonical resolution, in fixed (512, 1024, 2048) order."""
    return [mel_db(x, cfg) for cfg in canonical_configs(sample_rate)]


def multi_scale_mel_distance(x: Node, reference: list[np.ndarray], sample_rate: int) -> Node:
    """Sum over scales of the L1 distance to precomputed reference mels."""
    scales = multi_scale_mel(x, sample_rate)
    if len(reference) != len(scales):
        raise ValueError("reference mel list does not match the canonical scales")
    total = None
    for mel_node, ref in zip(scales, reference):
        term = ad.l1_distance(mel_node, x.tape.constant(ref))
        total = term if total is None else ad.add(total, term)
    return total


# ---------------------------------------------------------------------------
# plain-array conveniences (throwaway tape, same code path)


def stft_power_array(x: np.ndarray, cfg: MelConfig) -> np.ndarray:
    return stft_power(Tape().constant(x), cfg).value


def stft_magnitude_array(x: np.ndarray, cfg: MelConfig) -> np.ndarray:
    return np.sqrt(stft_power_array(x, cfg))


def mel_power_array(x: np.ndarray, cfg: MelConfig) -> np.ndarray:
    return mel_power(Tape().constant(x), cfg).value


def mel_db_array(x: np.ndarray, cfg: MelConfig) -> np.ndarray:
    return mel_db(Tape().constant(x), cfg).value


def spectrogram(x: np.ndarray, cfg: MelConfig, kind: str = "mel_db") -> Spectrogram:
    """Compute a tagged spectrogram of the requested kind."""
    if kind == "power":
        values = stft_power_array(x, cfg)
    elif kind == "magnitude":
        values = stft_magnitude_array(x, cfg)
    elif kind == "mel_power":
        values = mel_power_array(x, cfg)
    elif kind == "mel_db":
        values = mel_db_array(x, cfg)
    else:
        raise ValueError(f"unknown spectrogram kind {kind!r}")
    return Spectrogram(values, kind, cfg)
