"""Stage 1: one universal perturbation per batch of clips.

Each clip contributes a task loss that pushes the perturbed clip's
speaker embedding away from a target; the per-task gradients are blended
by the min-norm solver so no clip's protection is sacrificed to another's,
and the perturbation is clamped to an L-infinity budget after every step.

The perturbation has the length of the shortest clip in the batch and is
applied to the first samples of each clip, leaving longer tails
untouched.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import autodiff as ad
from .audio_io import AudioClip
from .autodiff import Node, Tape
from .encoder import SurrogateEncoder
from .mgda import min_norm_point
from .validation import check_clips, check_same_rate

REPEL_ORIGINAL = "repel"
ATTRACT_DECOY = "attract"


class DivergenceError(RuntimeError):
    """A task loss went non-finite; carries the iteration index."""

    def __init__(self, iteration: int, detail: str):
        super().__init__(f"non-finite loss at iteration {iteration}: {detail}")
        self.iteration = iteration


@dataclass(frozen=True)
class Stage1Config:
    """Knobs for the universal-perturbation loop.

    ``epsilon`` bounds the perturbation in L-infinity; initialization is
    uniform in [-init_range, init_range], which may sit strictly inside
    the budget. ``loss_mode`` is "repel" (drive the embedding away from
    the clip's own clean embedding) or "attract" (pull it toward a decoy
    embedding).
    """

    epsilon: float = 0.15
    init_range: float = 0.1
    iterations: int = 60
    # Raw-gradient steps through the embedding loss are O(1e-2) in waveform
    # units; the clamp bounds any overshoot, so the default is sized to cross
    # the epsilon box within the default iteration budget.
    learning_rate: float = 5.0
    loss_mode: str = REPEL_ORIGINAL
    decoy: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.init_range <= self.epsilon:
            raise ValueError("need 0 < init_range <= epsilon")
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.loss_mode not in (REPEL_ORIGINAL, ATTRACT_DECOY):
            raise ValueError(f"unknown loss_mode {self.loss_mode!r}")
        if self.loss_mode == ATTRACT_DECOY and self.decoy is None:
            raise ValueError("attract mode needs a decoy embedding")


@dataclass
class Perturbation:
    """Bounded additive waveform delta."""

    delta: np.ndarray
    epsilon: float

    def __post_init__(self):
        self.delta = np.asarray(self.delta, dtype=np.float64)
        if self.linf > self.epsilon + 1e-12:
            raise ValueError("delta exceeds its own epsilon bound")

    @property
    def linf(self) -> float:
        return float(np.max(np.abs(self.delta))) if self.delta.size else 0.0

    def applied_to(self, clip: AudioClip) -> AudioClip:
        """Clip with the delta added to its first len(delta) samples."""
        if len(clip) < len(self.delta):
            raise ValueError(f"clip {clip.id!r} is shorter than the perturbation")
        samples = clip.samples.copy()
        samples[: len(self.delta)] += self.delta
        return clip.with_samples(samples)


def perturbed_clip_node(tape: Tape, clip: AudioClip, delta: np.ndarray) -> tuple[Node, Node]:
    """(delta leaf, perturbed waveform node) with the delta zero-padded to
    the clip length so gradients come back at the delta's own length."""
    if len(clip) < len(delta):
        raise ValueError(f"clip {clip.id!r} is shorter than the perturbation")
    leaf = tape.leaf(delta)
    padded = ad.pad_to(leaf, len(clip)) if len(clip) > len(delta) else leaf
    return leaf, ad.add(tape.constant(clip.samples), padded)


def task_loss(
    clip: AudioClip,
    delta: np.ndarray,
    encoder: SurrogateEncoder,
    mode: str = REPEL_ORIGINAL,
    target: np.ndarray | None = None,
) -> tuple[Node, Node]:
    """Scalar loss node for one clip, plus the delta leaf for its gradient.

    repel: cosine similarity to the clip's own clean embedding (the
    target, treated as constant) - minimizing drives the voice away.
    attract: 1 - cosine similarity to a decoy embedding, which must be
    supplied as ``target``.
    """
    if target is None:
        if mode != REPEL_ORIGINAL:
            raise ValueError("attract mode needs an explicit target embedding")
        target = encoder.embed(clip)
    tape = Tape()
    leaf, perturbed = perturbed_clip_node(tape, clip, delta)
    emb = encoder.embed_node(perturbed, clip.sample_rate)
    cos = ad.cosine_similarity(emb, tape.constant(target))
    if mode == REPEL_ORIGINAL:
        return cos, leaf
    return ad.add(ad.scalar_scale(cos, -1.0), tape.constant(1.0)), leaf


def generate_universal(
    batch: Sequence[AudioClip],
    cfg: Stage1Config,
    encoder: SurrogateEncoder,
) -> tuple[Perturbation, list[dict]]:
    """Run the multi-objective loop over a batch.

    Returns the final perturbation and one trace record per iteration:
    {"iter", "losses", "alpha", "linf"} with losses measured on the
    perturbation entering the iteration and linf measured after the
    clamped update.
    """
    batch = check_clips(batch, minimum=1)
    check_same_rate(batch)
    length = min(len(clip) for clip in batch)

    targets = []
    for clip in batch:
        if cfg.loss_mode == ATTRACT_DECOY:
            targets.append(np.asarray(cfg.decoy, dtype=np.float64))
        else:
            targets.append(encoder.embed(clip))

    rng = np.random.default_rng(cfg.seed)
    delta = rng.uniform(-cfg.init_range, cfg.init_range, size=length)

    trace = []
    for t in range(1, cfg.iterations + 1):
        losses = []
        grads = []
        for clip, target in zip(batch, targets):
            try:
                loss, leaf = task_loss(clip, delta, encoder, cfg.loss_mode, target)
            except ad.NonFiniteValueError as exc:
                raise DivergenceError(t, f"clip {clip.id!r}: {exc}") from exc
            if not np.isfinite(loss.value):
                raise DivergenceError(t, f"clip {clip.id!r}")
            ad.backward(loss)
            losses.append(float(loss.value))
            grads.append(leaf.grad)
        alpha, combined = min_norm_point(grads)
        delta = np.clip(delta - cfg.learning_rate * combined, -cfg.epsilon, cfg.epsilon)
        trace.append(
            {
                "iter": t,
                "losses": losses,
                "alpha": [float(a) for a in alpha],
                "linf": float(np.max(np.abs(delta))),
            }
        )
    return Perturbation(delta, cfg.epsilon), trace


class UniversalPerturber(BaseEstimator, TransformerMixin):
    """Estimator facade: fit learns one perturbation for a batch of clips,
    transform applies it.

    Parameters mirror Stage1Config; ``encoder`` defaults to a fresh
    SurrogateEncoder(seed=0) at fit time.
    """

    def __init__(
        self,
        epsilon: float = 0.15,
        init_range: float = 0.1,
        iterations: int = 60,
        learning_rate: float = 0.01,
        loss_mode: str = REPEL_ORIGINAL,
        decoy: np.ndarray | None = None,
        seed: int = 0,
        encoder: SurrogateEncoder | None = None,
    ):
        self.epsilon = epsilon
        self.init_range = init_range
        self.iterations = iterations
        self.learning_rate = learning_rate
        self.loss_mode = loss_mode
        self.decoy = decoy
        self.seed = seed
        self.encoder = encoder

    def _config(self) -> Stage1Config:
        return Stage1Config(
            epsilon=self.epsilon,
            init_range=self.init_range,
            iterations=self.iterations,
            learning_rate=self.learning_rate,
            loss_mode=self.loss_mode,
            decoy=self.decoy,
            seed=self.seed,
        )

    def _encoder(self) -> SurrogateEncoder:
        return self.encoder if self.encoder is not None else SurrogateEncoder()

    def fit(self, X: Sequence[AudioClip], y=None):
        perturbation, trace = generate_universal(X, self._config(), self._encoder())
        self.perturbation_ = perturbation
        self.delta_ = perturbation.delta
        self.trace_ = trace
        self.sample_rate_ = X[0].sample_rate
        return self

    def transform(self, X: Sequence[AudioClip]) -> list[AudioClip]:
        if not hasattr(self, "perturbation_"):
            raise RuntimeError("UniversalPerturber is not fitted")
        return [self.perturbation_.applied_to(clip) for clip in X]
