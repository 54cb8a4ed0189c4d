"""RIFF/WAVE reading and writing.

Supports the two encodings used by the pipeline: 16-bit integer PCM
(format code 1) and 32-bit IEEE float (format code 3), little-endian.
Everything is normalized to a mono float64 waveform internally; files are
always written back as 32-bit float so sub-quantization perturbation
detail survives a round trip (16-bit quantization noise is on the order
of 3e-5, inside a refined perturbation's dynamic range).

No resampling happens here; batches with mixed rates are rejected
upstream.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .validation import check_clip

PCM_16 = 1
IEEE_FLOAT = 3


class WavError(ValueError):
    """Malformed or unsupported WAV content."""


@dataclass
class AudioClip:
    """A mono waveform with its sample rate and an opaque label.

    Samples are dimensionless amplitudes, nominally in [-1, 1] but not
    clipped to that range.
    """

    samples: np.ndarray
    sample_rate: int
    id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        check_clip(self)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def with_samples(self, samples: np.ndarray, id: str | None = None) -> "AudioClip":
        return AudioClip(samples, self.sample_rate, self.id if id is None else id)


def read_wav(path) -> AudioClip:
    """Read a PCM16 or float32 WAV file as a mono clip.

    Multi-channel input is downmixed by per-frame arithmetic mean.
    16-bit samples map to value / 32768.
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise WavError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        chunk_id = raw[pos : pos + 4]
        (chunk_size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8 : pos + 8 + chunk_size]
        if chunk_id == b"fmt ":
            if len(body) < 16:
                raise WavError(f"{path}: truncated fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            if len(body) < chunk_size:
                raise WavError(f"{path}: data chunk shorter than declared")
            data = body
        pos += 8 + chunk_size + (chunk_size & 1)  # chunks are word-aligned

    if fmt is None:
        raise WavError(f"{path}: missing fmt chunk")
    if data is None:
        raise WavError(f"{path}: missing data chunk")
    if len(data) == 0:
        raise WavError(f"{path}: empty data chunk")

    format_code, channels, sample_rate, _, _, bits = fmt
    if channels < 1:
        raise WavError(f"{path}: invalid channel count {channels}")
    if format_code == PCM_16 and bits == 16:
        values = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    elif format_code == IEEE_FLOAT and bits == 32:
        values = np.frombuffer(data, dtype="<f4").astype(np.float64)
    else:
        raise WavError(
            f"{path}: unsupported encoding (format code {format_code}, {bits}-bit);"
            " only 16-bit PCM and 32-bit float are handled"
        )

    frames = len(values) // channels
    if frames == 0:
        raise WavError(f"{path}: empty data chunk")
    values = values[: frames * channels].reshape(frames, channels)
    mono = values.mean(axis=1) if channels > 1 else values[:, 0]
    return AudioClip(mono, sample_rate, id=path.stem)


def write_wav(clip: AudioClip, path) -> None:
    """Write a clip as mono 32-bit float WAV.

    Samples outside [-1, 1] are written unchanged; the float format has
    headroom and downstream metrics expect the exact waveform back.
    """
    check_clip(clip)
    path = Path(path)
    payload = np.asarray(clip.samples, dtype="<f4").tobytes()
    header = b"".join(
        [
            b"RIFF",
            struct.pack("<I", 36 + len(payload)),
            b"WAVE",
            b"fmt ",
            struct.pack("<I", 16),
            struct.pack(
                "<HHIIHH",
                IEEE_FLOAT,
                1,
                clip.sample_rate,
                clip.sample_rate * 4,
                4,
                32,
            ),
            b"data",
            struct.pack("<I", len(payload)),
        ]
    )
    path.write_bytes(header + payload)
