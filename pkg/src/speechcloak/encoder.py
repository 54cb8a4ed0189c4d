"""Small deterministic speaker-embedding model used as the attack surface.

The architecture is deliberately minimal: mel-dB features (1024/256),
temporal mean pooling, a two-layer perceptron, L2 normalization. Weights
are drawn once from a seed and never trained; the perturbation
algorithms only need gradients of a fixed, spectrally sensitive mapping.

Similarity numbers produced by this model are NOT comparable to speaker
verification scores from pretrained systems; they only order "same
voice" against "different voice" within this toolkit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import autodiff as ad
from . import melspec
from .audio_io import AudioClip
from .autodiff import Node, Tape

MEL_BANDS = 80
HIDDEN_UNITS = 128
EMBEDDING_DIM = 64
MIN_INPUT_SAMPLES = 1024  # one frame of the front-end mel transform

WEIGHT_FILE_MAGIC = b"CSW1"


@dataclass(frozen=True)
class EncoderWeights:
    """Immutable perceptron weights, deterministically derived from a seed."""

    w1: np.ndarray  # (80, 128)
    b1: np.ndarray  # (128,)
    w2: np.ndarray  # (128, 64)
    b2: np.ndarray  # (64,)
    seed: int

    @classmethod
    def from_seed(cls, seed: int) -> "EncoderWeights":
        rng = np.random.default_rng(seed)

        def uniform(fan_in, shape):
            bound = 1.0 / np.sqrt(fan_in)
            arr = rng.uniform(-bound, bound, size=shape)
            arr.flags.writeable = False
            return arr

        return cls(
            w1=uniform(MEL_BANDS, (MEL_BANDS, HIDDEN_UNITS)),
            b1=uniform(MEL_BANDS, (HIDDEN_UNITS,)),
            w2=uniform(HIDDEN_UNITS, (HIDDEN_UNITS, EMBEDDING_DIM)),
            b2=uniform(HIDDEN_UNITS, (EMBEDDING_DIM,)),
            seed=seed,
        )

    def save(self, path) -> None:
        """Dump as little-endian float32: magic, then per array the rank,
        the dims, and the flat data."""
        arrays = [self.w1, self.b1, self.w2, self.b2]
        blob = [WEIGHT_FILE_MAGIC, struct.pack("<I", len(arrays))]
        for arr in arrays:
            blob.append(struct.pack("<I", arr.ndim))
            blob.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
            blob.append(np.asarray(arr, dtype="<f4").tobytes())
        Path(path).write_bytes(b"".join(blob))


def load_weight_arrays(path) -> list[np.ndarray]:
    """Read back a weight dump; returns the raw float32 arrays."""
    raw = Path(path).read_bytes()
    if raw[:4] != WEIGHT_FILE_MAGIC:
        raise ValueError("not an encoder weight file")
    (count,) = struct.unpack_from("<I", raw, 4)
    offset = 8
    arrays = []
    for _ in range(count):
        (ndim,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        shape = struct.unpack_from(f"<{ndim}I", raw, offset)
        offset += 4 * ndim
        size = int(np.prod(shape))
        arrays.append(
            np.frombuffer(raw, dtype="<f4", count=size, offset=offset).reshape(shape)
        )
        offset += 4 * size
    return arrays


@lru_cache(maxsize=None)
def _weights_for_seed(seed: int) -> EncoderWeights:
    return EncoderWeights.from_seed(seed)


def _mean_over_frames(mel: Node) -> Node:
    frames = mel.value.shape[0]
    pooling = np.full(frames, 1.0 / frames)
    return ad.matmul(mel.tape.constant(pooling), mel)


def embed_from_mel(mel: Node, weights: EncoderWeights) -> Node:
    """Perceptron head: mean-pooled mel features to a unit embedding."""
    tape = mel.tape
    pooled = _mean_over_frames(mel)
    hidden = ad.relu(
        ad.add(ad.matmul(pooled, tape.constant(weights.w1)), tape.constant(weights.b1))
    )
    raw = ad.add(
        ad.matmul(hidden, tape.constant(weights.w2)), tape.constant(weights.b2)
    )
    return ad.l2_normalize(raw)


def embed(x: Node, weights: EncoderWeights, sample_rate: int) -> Node:
    """Unit-norm 64-dim speaker embedding of a waveform node."""
    if x.value.size < MIN_INPUT_SAMPLES:
        raise ValueError(
            f"encoder needs at least {MIN_INPUT_SAMPLES} samples, got {x.value.size}"
        )
    mel = melspec.mel_db(x, melspec.encoder_config(sample_rate))
    return embed_from_mel(mel, weights)


def model_output_proxy(x: Node, weights: EncoderWeights, sample_rate: int) -> Node:
    """Stand-in for the attacked model's output representation.

    Identical to ``embed`` today; a future adapter for a real synthesis
    model can replace this behind the same contract.
    """
    return embed(x, weights, sample_rate)


def similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Dot product of two unit-norm embeddings (their cosine similarity)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    for name, v in (("a", a), ("b", b)):
        if abs(np.linalg.norm(v) - 1.0) > 1e-6:
            raise ValueError(f"embedding {name} is not unit-norm")
    return float(np.dot(a, b))


class SurrogateEncoder(BaseEstimator, TransformerMixin):
    """sklearn-style wrapper: clips in, unit speaker embeddings out.

    The transform is stateless (weights are a pure function of ``seed``),
    so it is usable with or without a prior ``fit`` call.
    """

    def __init__(self, seed: int = 0):
        self.seed = seed

    @property
    def weights(self) -> EncoderWeights:
        return _weights_for_seed(self.seed)

    def fit(self, X=None, y=None):
        self.weights_ = self.weights
        return self

    def transform(self, X) -> np.ndarray:
        return np.stack([self.embed(clip) for clip in X])

    def embed(self, clip: AudioClip | np.ndarray, sample_rate: int | None = None) -> np.ndarray:
        if isinstance(clip, AudioClip):
            samples, rate = clip.samples, clip.sample_rate
        else:
            if sample_rate is None:
                raise ValueError("sample_rate is required for bare arrays")
            samples, rate = np.asarray(clip, dtype=np.float64), sample_rate
        return embed(Tape().constant(samples), self.weights, rate).value

    def embed_node(self, x: Node, sample_rate: int) -> Node:
        return embed(x, self.weights, sample_rate)

    def output_proxy_node(self, x: Node, sample_rate: int) -> Node:
        return model_output_proxy(x, self.weights, sample_rate)

    def save_weights(self, path) -> None:
        self.weights.save(path)

    @staticmethod
    def similarity(a: np.ndarray, b: np.ndarray) -> float:
        return similarity(a, b)
