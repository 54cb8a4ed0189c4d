"""Batch orchestration: corpus ingestion, the two protection stages,
artifact output, and evaluation.

A protect run is fully determined by its RunConfig: clips are batched in
sorted-filename order (optionally a seeded shuffle), each batch gets a
universal perturbation under a per-batch seed derived from the run seed,
and each clip is optionally refined. Every artifact (protected WAVs,
delta WAVs, JSON-lines traces, the manifest) is written with relative
paths and no volatile fields, so replaying the same config over the same
corpus reproduces every byte.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .audio_io import AudioClip, read_wav, write_wav
from .encoder import SurrogateEncoder
from .refine import (
    COEFFICIENT_PRESETS,
    RefineConfig,
    SaveFinal,
    SaveMinOutLastK,
    SaveMinOutUnderRef,
    refine,
)
from .universal import Perturbation, Stage1Config, generate_universal

MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class RunConfig:
    input_dir: str = ""
    output_dir: str = ""
    batch_size: int = 5
    stage1: Stage1Config = field(default_factory=Stage1Config)
    stage2: RefineConfig = field(default_factory=RefineConfig)
    stage2_enabled: bool = True
    encoder_seed: int = 0
    report_path: str = ""
    shuffle_seed: int | None = None
    workers: int = 1

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")


def _strategy_to_json(strategy) -> dict:
    if isinstance(strategy, SaveFinal):
        return {"kind": "final"}
    if isinstance(strategy, SaveMinOutUnderRef):
        return {"kind": "min_out_under_ref", "threshold": strategy.threshold}
    if isinstance(strategy, SaveMinOutLastK):
        return {"kind": "min_out_last_k", "window": strategy.window}
    raise TypeError(f"unknown save strategy {strategy!r}")


def _strategy_from_json(data: dict):
    kind = data.get("kind", "final")
    if kind == "final":
        return SaveFinal()
    if kind == "min_out_under_ref":
        return SaveMinOutUnderRef(threshold=data.get("threshold", 1.65))
    if kind == "min_out_last_k":
        return SaveMinOutLastK(window=data.get("window", 30))
    raise ValueError(f"unknown save strategy kind {kind!r}")


def config_to_dict(config: RunConfig) -> dict:
    data = asdict(config)
    data["stage1"] = asdict(config.stage1)
    decoy = config.stage1.decoy
    data["stage1"]["decoy"] = None if decoy is None else [float(v) for v in decoy]
    data["stage2"] = asdict(config.stage2)
    data["stage2"]["save_strategy"] = _strategy_to_json(config.stage2.save_strategy)
    return data


def config_from_dict(data: dict) -> RunConfig:
    data = dict(data)
    stage1 = dict(data.pop("stage1", {}))
    if stage1.get("decoy") is not None:
        stage1["decoy"] = np.asarray(stage1["decoy"], dtype=np.float64)
    stage2 = dict(data.pop("stage2", {}))
    if "save_strategy" in stage2:
        stage2["save_strategy"] = _strategy_from_json(stage2["save_strategy"])
    return RunConfig(
        stage1=Stage1Config(**stage1), stage2=RefineConfig(**stage2), **data
    )


def load_config(path) -> RunConfig:
    return config_from_dict(json.loads(Path(path).read_text()))


def coefficient_preset(name: str) -> tuple[float, float]:
    """(reference, output) static loss coefficients by backend style."""
    try:
        return COEFFICIENT_PRESETS[name]
    except KeyError:
        raise ValueError(
            f"unknown preset {name!r}; choose from {sorted(COEFFICIENT_PRESETS)}"
        ) from None


def batch_indices(count: int, batch_size: int) -> list[list[int]]:
    """Contiguous batches; the remainder forms a final smaller batch."""
    return [
        list(range(start, min(start + batch_size, count)))
        for start in range(0, count, batch_size)
    ]


def batch_seed(run_seed: int, batch_index: int) -> int:
    """Deterministic per-batch seed derived from the run seed."""
    return int(np.random.SeedSequence([run_seed, batch_index]).generate_state(1)[0])


def discover_corpus(input_dir, shuffle_seed: int | None = None) -> list[Path]:
    paths = sorted(Path(input_dir).glob("*.wav"))
    if not paths:
        raise FileNotFoundError(f"no .wav files under {input_dir}")
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(len(paths))
        paths = [paths[i] for i in order]
    return paths


def _write_jsonl(path: Path, records) -> None:
    path.write_text("".join(json.dumps(r) + "\n" for r in records))


@dataclass
class ProtectedClip:
    clip: AudioClip
    protected: AudioClip
    delta: np.ndarray
    refine_trace: list[dict] | None
    chosen_step: int | None


def _protect_batch(
    clips: list[AudioClip], config: RunConfig, seed: int, encoder: SurrogateEncoder
) -> tuple[Perturbation, list[dict], list[ProtectedClip]]:
    stage1 = replace(config.stage1, seed=seed)
    perturbation, stage1_trace = generate_universal(clips, stage1, encoder)
    results = []
    for clip in clips:
        rough = perturbation.applied_to(clip)
        if config.stage2_enabled:
            refined = refine(clip, rough, config.stage2, encoder)
            protected = clip.with_samples(clip.samples + refined.delta)
            results.append(
                ProtectedClip(clip, protected, refined.delta, refined.trace, refined.chosen_step)
            )
        else:
            delta = rough.samples - clip.samples
            results.append(ProtectedClip(clip, rough, delta, None, None))
    return perturbation, stage1_trace, results


def protect_run(config: RunConfig) -> dict:
    """Execute stage 1 (+ optional stage 2) over the corpus; returns the
    manifest, which is also written to the output directory."""
    paths = discover_corpus(config.input_dir, config.shuffle_seed)
    clips = [read_wav(p) for p in paths]
    out_root = Path(config.output_dir)
    for sub in ("protected", "deltas", "traces"):
        (out_root / sub).mkdir(parents=True, exist_ok=True)

    encoder = SurrogateEncoder(seed=config.encoder_seed)
    batches = batch_indices(len(clips), config.batch_size)

    def run_batch(b: int):
        members = [clips[i] for i in batches[b]]
        return _protect_batch(members, config, batch_seed(config.stage1.seed, b), encoder)

    if config.workers > 1 and len(batches) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(run_batch, range(len(batches))))
    else:
        outcomes = [run_batch(b) for b in range(len(batches))]

    manifest_batches = []
    for b, (perturbation, stage1_trace, results) in enumerate(outcomes):
        universal_name = f"deltas/batch{b:03d}_universal.wav"
        rate = results[0].clip.sample_rate
        write_wav(AudioClip(perturbation.delta, rate, f"batch{b:03d}"), out_root / universal_name)
        stage1_trace_name = f"traces/batch{b:03d}_stage1.jsonl"
        _write_jsonl(out_root / stage1_trace_name, stage1_trace)

        clip_entries = []
        for i, result in zip(batches[b], results):
            stem = paths[i].stem
            protected_name = f"protected/{stem}.wav"
            delta_name = f"deltas/{stem}.wav"
            write_wav(result.protected, out_root / protected_name)
            write_wav(
                AudioClip(result.delta, rate, f"{stem}_delta"), out_root / delta_name
            )
            entry = {
                "id": result.clip.id,
                "source": paths[i].name,
                "protected": protected_name,
                "delta": delta_name,
                "sample_rate": rate,
            }
            if result.refine_trace is not None:
                trace_name = f"traces/{stem}_stage2.jsonl"
                _write_jsonl(out_root / trace_name, result.refine_trace)
                entry["stage2_trace"] = trace_name
                entry["chosen_step"] = result.chosen_step
            clip_entries.append(entry)
        manifest_batches.append(
            {
                "index": b,
                "seed": batch_seed(config.stage1.seed, b),
                "universal_delta": universal_name,
                "stage1_trace": stage1_trace_name,
                "clips": clip_entries,
            }
        )

    manifest = {"config": config_to_dict(config), "batches": manifest_batches}
    (out_root / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


def load_transcripts(path) -> dict:
    """Optional transcripts file: {clip id: {"reference": .., "hypothesis": ..}}."""
    data = json.loads(Path(path).read_text())
    return {
        key: (value["reference"], value["hypothesis"]) for key, value in data.items()
    }


def evaluate_run(config: RunConfig, transcripts: dict | None = None) -> tuple[dict, list[str]]:
    """Compute the metrics report for a finished protect run.

    Returns (report, errors); per-clip problems (e.g. a missing protected
    file) are reported as error strings rather than aborting the whole
    evaluation.
    """
    from .metrics import build_report

    out_root = Path(config.output_dir)
    manifest = json.loads((out_root / MANIFEST_NAME).read_text())
    encoder = SurrogateEncoder(seed=config.encoder_seed)

    originals = []
    protected = []
    clip_transcripts = []
    errors = []
    for batch in manifest["batches"]:
        for entry in batch["clips"]:
            source = Path(config.input_dir) / entry["source"]
            target = out_root / entry["protected"]
            if not source.exists():
                errors.append(f"{entry['id']}: missing original {source}")
                continue
            if not target.exists():
                errors.append(f"{entry['id']}: missing protected file {entry['protected']}")
                continue
            originals.append(read_wav(source))
            protected.append(read_wav(target))
            if transcripts is not None:
                clip_transcripts.append(transcripts.get(entry["id"]))

    report = build_report(
        originals,
        protected,
        transcripts=clip_transcripts if transcripts is not None else None,
        encoder=encoder,
        config_echo=config_to_dict(config),
    )
    if errors:
        report["errors"] = errors
    if config.report_path:
        report_path = Path(config.report_path)
        report_path.parent.mkdir(parents=True, exist_ok=True)
        from .metrics import report_to_json

        report_path.write_text(report_to_json(report) + "\n")
    return report, errors
