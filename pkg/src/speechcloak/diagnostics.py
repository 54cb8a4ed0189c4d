"""Gradient validation suite for every differentiable building block.

Each check compares the tape's analytic gradient against central finite
differences. Core ops are probed on every coordinate of small random
inputs; the full DSP/encoder/loss stacks are probed on a seeded subset
of coordinates (the analytic side is always complete) to keep the suite
fast. Inputs are drawn away from kink points (|x| above 1e-3 for
abs/relu/clamp) so the subgradient conventions do not pollute the
comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import melspec
from .audio_io import AudioClip
from .autodiff import grad_check
from .encoder import SurrogateEncoder
from .refine import RefineConfig
from .universal import task_loss

CORE_TOLERANCE = 1e-4
STACK_TOLERANCE = 1e-3


@dataclass
class CheckResult:
    name: str
    max_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tolerance


def _away_from_zero(rng, size, low=0.2, high=1.0):
    """Random values with |x| in [low, high]: clear of kinks at the origin."""
    return rng.uniform(low, high, size=size) * rng.choice([-1.0, 1.0], size=size)


def core_op_checks(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    x = _away_from_zero(rng, 12)
    y = _away_from_zero(rng, 12)
    pos = rng.uniform(0.5, 2.0, size=12)
    a_mat = rng.normal(size=(6, 4))
    b_mat = rng.normal(size=(4, 5))
    weights = rng.normal(size=12)

    checks = [
        ("add", lambda n: ad.sum_all(ad.add(n, n.tape.constant(y))), x),
        ("sub", lambda n: ad.sum_all(ad.sub(n, n.tape.constant(y))), x),
        (
            "elementwise_mul",
            lambda n: ad.sum_all(ad.elementwise_mul(n, n.tape.constant(y))),
            x,
        ),
        ("scalar_scale", lambda n: ad.sum_all(ad.scalar_scale(n, 2.5)), x),
        ("square", lambda n: ad.sum_all(ad.square(n)), x),
        ("sqrt_eps", lambda n: ad.sum_all(ad.sqrt_eps(n, 1e-12)), pos),
        ("absolute", lambda n: ad.sum_all(ad.absolute(n)), x),
        ("log_floor", lambda n: ad.sum_all(ad.log_floor(n, 1e-10)), pos),
        ("relu", lambda n: ad.sum_all(ad.relu(n)), x),
        ("mean", lambda n: ad.mean(n), x),
        ("sum", lambda n: ad.sum_all(n), x),
        ("clamp_minmax", lambda n: ad.sum_all(ad.clamp_minmax(n, -0.7, 0.7)), x),
        (
            "matmul",
            lambda n: ad.sum_all(ad.square(ad.matmul(n, n.tape.constant(b_mat)))),
            a_mat,
        ),
        (
            "l1_distance",
            lambda n: ad.l1_distance(n, n.tape.constant(y)),
            x,
        ),
        ("l2_norm", lambda n: ad.l2_norm(n), x),
        (
            "l2_normalize",
            lambda n: ad.sum_all(
                ad.elementwise_mul(ad.l2_normalize(n), n.tape.constant(weights))
            ),
            x,
        ),
        (
            "cosine_similarity",
            lambda n: ad.cosine_similarity(n, n.tape.constant(y)),
            x,
        ),
        (
            "frame_gather",
            lambda n: ad.sum_all(ad.square(ad.frame_gather(n, 3, 8))),
            x,
        ),
        (
            "frame_stack",
            lambda n: ad.sum_all(ad.square(ad.frame_stack(n, 6, 2, 6))),
            x,
        ),
        ("pad_to", lambda n: ad.sum_all(ad.square(ad.pad_to(n, 20))), x),
    ]
    return [
        CheckResult(name, grad_check(f, arr), CORE_TOLERANCE) for name, f, arr in checks
    ]


def _subset(rng, size: int, count: int) -> list[int]:
    return sorted(rng.choice(size, size=min(count, size), replace=False).tolist())


def stack_checks(seed: int = 0, probes: int = 48, h: float = 1e-5) -> list[CheckResult]:
    # h below the default 1e-4: the mel losses have L1 sign kinks with steep
    # dB slopes on both sides, and a wider step can straddle one.
    rng = np.random.default_rng(seed)
    rate = 16000
    signal = 0.3 * np.sin(2 * np.pi * 220 * np.arange(2560) / rate) + 0.05 * rng.normal(
        size=2560
    )
    clip = AudioClip(signal, rate, "gradcheck")
    encoder = SurrogateEncoder(seed=7)
    delta0 = rng.uniform(-0.05, 0.05, size=2048)

    results = []

    refs = [
        melspec.mel_db_array(signal[:2048], cfg)
        for cfg in melspec.canonical_configs(rate)
    ]

    def dsp_stack(n):
        return melspec.multi_scale_mel_distance(n, refs, rate)

    perturbed0 = signal[:2048] + delta0
    results.append(
        CheckResult(
            "dsp multi-scale mel L1",
            grad_check(dsp_stack, perturbed0, h=h, indices=_subset(rng, 2048, probes)),
            STACK_TOLERANCE,
        )
    )

    target = encoder.embed(signal[:2048], rate)

    def encoder_stack(n):
        emb = encoder.embed_node(n, rate)
        return ad.cosine_similarity(emb, n.tape.constant(target))

    results.append(
        CheckResult(
            "encoder cosine similarity",
            grad_check(encoder_stack, perturbed0, h=h, indices=_subset(rng, 2048, probes)),
            STACK_TOLERANCE,
        )
    )

    clean_embedding = encoder.embed(clip)

    def stage1_stack(n):
        # same wiring as task_loss, with the perturbation as the leaf
        padded = ad.pad_to(n, len(clip))
        perturbed = ad.add(n.tape.constant(clip.samples), padded)
        emb = encoder.embed_node(perturbed, rate)
        return ad.cosine_similarity(emb, n.tape.constant(clean_embedding))

    results.append(
        CheckResult(
            "stage-1 task loss",
            grad_check(stage1_stack, delta0, h=h, indices=_subset(rng, 2048, probes)),
            STACK_TOLERANCE,
        )
    )

    cfg = RefineConfig()
    full_refs = [
        melspec.mel_db_array(clip.samples, c) for c in melspec.canonical_configs(rate)
    ]

    def stage2_stack(n):
        padded = ad.pad_to(n, len(clip))
        perturbed = ad.add(n.tape.constant(clip.samples), padded)
        ref_term = melspec.multi_scale_mel_distance(perturbed, full_refs, rate)
        out_term = ad.add(
            ad.cosine_similarity(
                encoder.embed_node(perturbed, rate), n.tape.constant(clean_embedding)
            ),
            n.tape.constant(1.0),
        )
        return ad.add(
            ad.scalar_scale(ref_term, 0.5 * cfg.coeff_ref),
            ad.scalar_scale(out_term, 0.5 * cfg.coeff_out),
        )

    results.append(
        CheckResult(
            "stage-2 weighted total loss",
            grad_check(stage2_stack, delta0, h=h, indices=_subset(rng, 2048, probes)),
            STACK_TOLERANCE,
        )
    )
    return results


def run_gradcheck(seed: int = 0) -> list[CheckResult]:
    """Core ops plus the four full stacks; verify ``task_loss`` wiring on
    the way (the stage-1 stack must agree with the public entry point)."""
    results = core_op_checks(seed) + stack_checks(seed)

    rng = np.random.default_rng(seed)
    rate = 16000
    clip = AudioClip(0.2 * rng.standard_normal(4096), rate, "wiring")
    delta = rng.uniform(-0.05, 0.05, size=2048)
    encoder = SurrogateEncoder(seed=3)
    loss, leaf = task_loss(clip, delta, encoder)
    ad.backward(loss)
    wired = float(np.max(np.abs(leaf.grad)))
    results.append(
        CheckResult("stage-1 wiring (nonzero gradient)", 0.0 if wired > 0 else 1.0, 0.5)
    )
    return results
