"""Stage 2: per-clip refinement of a universal perturbation.

The perturbation is re-optimized in the multi-resolution mel domain under
two competing objectives: a reference loss (L1 distance between the
mel-dB spectrograms of the perturbed and clean clip, summed over the
three canonical scales) pulling toward imperceptibility, and an output
loss (cosine similarity of the model-output embeddings, shifted into
[0, 2]) whose minimization keeps the perturbed voice far from the clean
one. A ring buffer of recent losses drives a softmax weighting between
the two, the learning rate follows a step decay, and a save strategy
picks which step's perturbation is returned.

Unlike stage 1 there is no L-infinity projection here; an optional
``clip_epsilon`` re-imposes one if callers want it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import autodiff as ad
from . import melspec
from .audio_io import AudioClip
from .autodiff import Tape
from .encoder import SurrogateEncoder, embed_from_mel
from .validation import check_clip, check_equal_length

# Static loss-coefficient presets (reference, output), named after the
# kind of synthesis backend they were tuned against.
COEFFICIENT_PRESETS = {
    "yourtts": (7 / 200, 1 / 600),
    "xttsv2": (1 / 100, 3 / 1000),
    "indextts": (3 / 25, 13 / 100),
}


@dataclass(frozen=True)
class SaveFinal:
    """Keep the perturbation after the last step."""


@dataclass(frozen=True)
class SaveMinOutUnderRef:
    """Among steps whose reference loss is below ``threshold``, keep the one
    with minimum output loss; fall back to the final step if none qualify."""

    threshold: float = 1.65


@dataclass(frozen=True)
class SaveMinOutLastK:
    """Keep the minimum-output-loss step among the last ``window`` steps."""

    window: int = 30


SaveStrategy = SaveFinal | SaveMinOutUnderRef | SaveMinOutLastK


@dataclass(frozen=True)
class RefineConfig:
    steps: int = 60
    learning_rate: float = 0.001
    scheduler_step: int = 30
    scheduler_gamma: float = 0.7
    coeff_ref: float = 1.0
    coeff_out: float = 1.0
    buffer_size: int = 5
    save_strategy: SaveStrategy = SaveFinal()
    clip_epsilon: float | None = None

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be at least 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.scheduler_step < 1:
            raise ValueError("scheduler_step must be at least 1")
        if not 0 < self.scheduler_gamma <= 1:
            raise ValueError("scheduler_gamma must be in (0, 1]")
        if self.coeff_ref <= 0 or self.coeff_out <= 0:
            raise ValueError("loss coefficients must be positive")
        if self.buffer_size < 1:
            raise ValueError("buffer_size must be at least 1")


@dataclass
class LossBuffers:
    """Ring buffers of recently stored (coefficient-scaled) losses."""

    ref: np.ndarray
    out: np.ndarray

    @classmethod
    def zeros(cls, size: int) -> "LossBuffers":
        return cls(np.zeros(size), np.zeros(size))


def dynamic_weights(
    ref_loss: float, out_loss: float, buffers: LossBuffers, slot: int
) -> tuple[float, float]:
    """Softmax over current-to-buffered loss ratios; equal weights while the
    buffer slot is still unpopulated. The weights are plain floats: no
    gradient flows through them."""
    if buffers.ref[slot] > 0 and buffers.out[slot] > 0:
        ratios = np.array([ref_loss / buffers.ref[slot], out_loss / buffers.out[slot]])
        exps = np.exp(ratios - np.max(ratios))
        w = exps / exps.sum()
        return float(w[0]), float(w[1])
    return 0.5, 0.5


def step_learning_rate(cfg: RefineConfig, step: int) -> float:
    """lr * gamma^floor(step/scheduler_step), with steps counted from 1."""
    return cfg.learning_rate * cfg.scheduler_gamma ** (step // cfg.scheduler_step)


def select_snapshot(trace: Sequence[dict], strategy: SaveStrategy) -> int:
    """1-based step index chosen by a save strategy; a pure function of the
    trace, so re-running it on a stored trace reproduces the choice."""
    if not trace:
        raise ValueError("empty trace")
    last = trace[-1]["step"]
    if isinstance(strategy, SaveFinal):
        return last
    if isinstance(strategy, SaveMinOutUnderRef):
        candidates = [r for r in trace if r["ref_loss"] < strategy.threshold]
        if not candidates:
            return last
        return min(candidates, key=lambda r: r["out_loss"])["step"]
    if isinstance(strategy, SaveMinOutLastK):
        window = trace[-strategy.window :]
        return min(window, key=lambda r: r["out_loss"])["step"]
    raise TypeError(f"unknown save strategy {strategy!r}")


@dataclass
class RefineResult:
    delta: np.ndarray
    trace: list[dict]
    chosen_step: int


def refine(
    clip: AudioClip,
    protected: AudioClip,
    cfg: RefineConfig,
    encoder: SurrogateEncoder,
) -> RefineResult:
    """Refine the perturbation implied by (clip, protected) = (x, x + delta).

    Trace records, one per step: step, slot, ref_loss / out_loss
    (coefficient-scaled, as seen by the weighting, the buffers and the
    save strategies), ref_raw / out_raw, ref_buffer / out_buffer (the
    buffer contents read before storing), w_ref / w_out, lr. The snapshot
    kept for step t is the perturbation after the update of step t.
    """
    check_clip(clip)
    check_clip(protected)
    check_equal_length(clip.samples, protected.samples, "clip and protected clip")
    if clip.sample_rate != protected.sample_rate:
        raise ValueError("clip and protected clip differ in sample rate")

    rate = clip.sample_rate
    configs = melspec.canonical_configs(rate)
    clean_mels = [melspec.mel_db_array(clip.samples, c) for c in configs]
    clean_embedding = encoder.embed(clip)

    delta = protected.samples - clip.samples
    buffers = LossBuffers.zeros(cfg.buffer_size)
    trace: list[dict] = []
    snapshots: list[np.ndarray] = []

    for t in range(1, cfg.steps + 1):
        slot = t % cfg.buffer_size
        tape = Tape()
        leaf = tape.leaf(delta)
        perturbed = ad.add(tape.constant(clip.samples), leaf)

        ref_node = None
        emb_node = None
        for config, clean in zip(configs, clean_mels):
            mel_node = melspec.mel_db(perturbed, config)
            term = ad.l1_distance(mel_node, tape.constant(clean))
            ref_node = term if ref_node is None else ad.add(ref_node, term)
            if config.n_fft == 1024:  # shared front end of the output proxy
                emb_node = embed_from_mel(mel_node, encoder.weights)
        out_node = ad.add(
            ad.cosine_similarity(emb_node, tape.constant(clean_embedding)),
            tape.constant(1.0),
        )

        ref_raw = float(ref_node.value)
        out_raw = float(out_node.value)
        ref_scaled = cfg.coeff_ref * ref_raw
        out_scaled = cfg.coeff_out * out_raw
        buffer_ref_read = float(buffers.ref[slot])
        buffer_out_read = float(buffers.out[slot])
        w_ref, w_out = dynamic_weights(ref_scaled, out_scaled, buffers, slot)

        total = ad.add(
            ad.scalar_scale(ref_node, w_ref * cfg.coeff_ref),
            ad.scalar_scale(out_node, w_out * cfg.coeff_out),
        )
        if not np.isfinite(total.value):
            raise ad.NonFiniteValueError(total.index, f"refine step {t}")
        ad.backward(total)

        lr = step_learning_rate(cfg, t)
        delta = delta - lr * leaf.grad
        if cfg.clip_epsilon is not None:
            delta = np.clip(delta, -cfg.clip_epsilon, cfg.clip_epsilon)

        buffers.ref[slot] = ref_scaled
        buffers.out[slot] = out_scaled
        trace.append(
            {
                "step": t,
                "slot": slot,
                "ref_loss": ref_scaled,
                "out_loss": out_scaled,
                "ref_raw": ref_raw,
                "out_raw": out_raw,
                "ref_buffer": buffer_ref_read,
                "out_buffer": buffer_out_read,
                "w_ref": w_ref,
                "w_out": w_out,
                "lr": lr,
            }
        )
        snapshots.append(delta.copy())

    chosen = select_snapshot(trace, cfg.save_strategy)
    return RefineResult(delta=snapshots[chosen - 1], trace=trace, chosen_step=chosen)


@dataclass
class RefineOutcome:
    """Per-pair result of a batch refinement; exactly one of result/error
    is set."""

    index: int
    result: RefineResult | None = None
    error: str | None = None


def refine_batch(
    pairs: Sequence[tuple[AudioClip, AudioClip]],
    cfg: RefineConfig,
    encoder: SurrogateEncoder,
    workers: int = 1,
) -> list[RefineOutcome]:
    """Independent refinement per (clip, protected) pair, order-preserving.

    A failing pair is reported in its outcome without aborting the rest.
    Results do not depend on ``workers``: every pair owns its tape and
    buffers, and outputs are collected in input order.
    """

    def run(i: int) -> RefineOutcome:
        try:
            return RefineOutcome(i, result=refine(pairs[i][0], pairs[i][1], cfg, encoder))
        except Exception as exc:  # noqa: BLE001 - reported per index
            return RefineOutcome(i, error=str(exc))

    indices = range(len(pairs))
    if workers <= 1 or len(pairs) <= 1:
        return [run(i) for i in indices]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, indices))


class MelRefiner(BaseEstimator, TransformerMixin):
    """Estimator facade over ``refine_batch``: pairs in, refined clips out.

    ``transform`` takes (original, protected) AudioClip pairs and returns
    the refined protected clips; failures raise with the pair index. The
    refinement is stateless, so ``fit`` only validates parameters.
    """

    def __init__(
        self,
        steps: int = 60,
        learning_rate: float = 0.001,
        scheduler_step: int = 30,
        scheduler_gamma: float = 0.7,
        coeff_ref: float = 1.0,
        coeff_out: float = 1.0,
        buffer_size: int = 5,
        save_strategy: SaveStrategy = SaveFinal(),
        clip_epsilon: float | None = None,
        encoder: SurrogateEncoder | None = None,
        workers: int = 1,
    ):
        self.steps = steps
        self.learning_rate = learning_rate
        self.scheduler_step = scheduler_step
        self.scheduler_gamma = scheduler_gamma
        self.coeff_ref = coeff_ref
        self.coeff_out = coeff_out
        self.buffer_size = buffer_size
        self.save_strategy = save_strategy
        self.clip_epsilon = clip_epsilon
        self.encoder = encoder
        self.workers = workers

    def _config(self) -> RefineConfig:
        return RefineConfig(
            steps=self.steps,
            learning_rate=self.learning_rate,
            scheduler_step=self.scheduler_step,
            scheduler_gamma=self.scheduler_gamma,
            coeff_ref=self.coeff_ref,
            coeff_out=self.coeff_out,
            buffer_size=self.buffer_size,
            save_strategy=self.save_strategy,
            clip_epsilon=self.clip_epsilon,
        )

    def fit(self, X=None, y=None):
        self._config()
        return self

    def transform(self, X: Sequence[tuple[AudioClip, AudioClip]]) -> list[AudioClip]:
        cfg = self._config()
        enc = self.encoder if self.encoder is not None else SurrogateEncoder()
        outcomes = refine_batch(X, cfg, enc, workers=self.workers)
        refined = []
        for outcome in outcomes:
            if outcome.error is not None:
                raise RuntimeError(f"pair {outcome.index}: {outcome.error}")
            clip = X[outcome.index][0]
            refined.append(clip.with_samples(clip.samples + outcome.result.delta))
        return refined
