"""Seeded reference scenarios shared by the test suite and the fixture
generator script. Any change here invalidates the frozen regression
values under tests/data/."""

from __future__ import annotations

import numpy as np

from speechcloak.encoder import SurrogateEncoder
from speechcloak.metrics import srs
from speechcloak.pipeline import batch_indices
from speechcloak.refine import RefineConfig, refine
from speechcloak.synth import harmonic_voice, synthetic_corpus
from speechcloak.universal import Stage1Config, generate_universal

CORPUS_SEED = 11
RUN_SEED = 123
ENCODER_SEED = 0
DEFENSE_BATCH_SIZE = 3

SMOKE_CONFIG = Stage1Config(learning_rate=0.075, iterations=60, seed=RUN_SEED)  # 0.5 * epsilon
REFINE_COEFFS = (0.005, 0.005)


def defense_corpus():
    return synthetic_corpus(n_clips=12, seed=CORPUS_SEED)


def smoke_batch():
    """Four one-second synthetic speakers for the small stage-1 scenario."""
    return [harmonic_voice(i, duration=1.0, seed=7) for i in range(4)]


def run_smoke(encoder: SurrogateEncoder):
    batch = smoke_batch()
    perturbation, trace = generate_universal(batch, SMOKE_CONFIG, encoder)
    return {
        "batch": batch,
        "perturbation": perturbation,
        "trace": trace,
        "first_mean_loss": float(np.mean(trace[0]["losses"])),
        "last_mean_loss": float(np.mean(trace[-1]["losses"])),
    }


def run_defense(encoder: SurrogateEncoder):
    """Stage 1 with defaults over the 12-clip corpus, batches of three."""
    corpus = defense_corpus()
    config = Stage1Config(seed=RUN_SEED)
    batches = []
    srs_values = []
    first_losses = []
    last_losses = []
    for ids in batch_indices(len(corpus), DEFENSE_BATCH_SIZE):
        batch = [corpus[i] for i in ids]
        perturbation, trace = generate_universal(batch, config, encoder)
        batches.append({"ids": ids, "perturbation": perturbation, "trace": trace})
        first_losses.extend(trace[0]["losses"])
        last_losses.extend(trace[-1]["losses"])
        for clip in batch:
            srs_values.append(srs(clip, perturbation.applied_to(clip), encoder))
    return {
        "corpus": corpus,
        "config": config,
        "batches": batches,
        "srs_values": srs_values,
        "first_mean_loss": float(np.mean(first_losses)),
        "last_mean_loss": float(np.mean(last_losses)),
    }


def run_refine_scenario(defense: dict, encoder: SurrogateEncoder):
    """Refine the first clip of the first defense batch."""
    clip = defense["corpus"][0]
    rough = defense["batches"][0]["perturbation"].applied_to(clip)
    config = RefineConfig(coeff_ref=REFINE_COEFFS[0], coeff_out=REFINE_COEFFS[1])
    result = refine(clip, rough, config, encoder)
    refined = clip.with_samples(clip.samples + result.delta)
    return {
        "clip": clip,
        "rough": rough,
        "config": config,
        "result": result,
        "srs_before": srs(clip, rough, encoder),
        "srs_after": srs(clip, refined, encoder),
    }
