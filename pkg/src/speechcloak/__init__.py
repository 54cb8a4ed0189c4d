"""speechcloak: adversarial protection of speech against voice cloning.

Two-stage pipeline: a universal perturbation per batch of clips
(multi-objective gradient descent with an L-infinity budget), then
per-clip refinement in a multi-resolution mel-spectrogram domain. An
in-package differentiable speaker encoder serves as the attack surface,
and an objective metric suite measures both imperceptibility and
protection strength.
"""

from .audio_io import AudioClip, WavError, read_wav, write_wav
from .encoder import EncoderWeights, SurrogateEncoder, similarity
from .melspec import MelConfig, Spectrogram, canonical_configs
from .mgda import min_norm_point
from .refine import (
    COEFFICIENT_PRESETS,
    MelRefiner,
    RefineConfig,
    SaveFinal,
    SaveMinOutLastK,
    SaveMinOutUnderRef,
    refine,
    refine_batch,
    select_snapshot,
)
from .universal import (
    Perturbation,
    Stage1Config,
    UniversalPerturber,
    generate_universal,
    task_loss,
)
from .metrics import build_report, cer_wer, dsr, lsd, mcd, sdr, snr, srs, stoi
from .pipeline import RunConfig, evaluate_run, protect_run
from .synth import harmonic_voice, synthetic_corpus

__version__ = "0.1.0"

__all__ = [
    "AudioClip",
    "WavError",
    "read_wav",
    "write_wav",
    "EncoderWeights",
    "SurrogateEncoder",
    "similarity",
    "MelConfig",
    "Spectrogram",
    "canonical_configs",
    "min_norm_point",
    "COEFFICIENT_PRESETS",
    "MelRefiner",
    "RefineConfig",
    "SaveFinal",
    "SaveMinOutLastK",
    "SaveMinOutUnderRef",
    "refine",
    "refine_batch",
    "select_snapshot",
    "Perturbation",
    "Stage1Config",
    "UniversalPerturber",
    "generate_universal",
    "task_loss",
    "build_report",
    "cer_wer",
    "dsr",
    "lsd",
    "mcd",
    "sdr",
    "snr",
    "srs",
    "stoi",
    "RunConfig",
    "evaluate_run",
    "protect_run",
    "harmonic_voice",
    "synthetic_corpus",
    "__version__",
]
