"""Command-line surface: protect, evaluate, gradcheck, mgda-demo."""

from __future__ import annotations

import json
import sys
from dataclasses import replace
from pathlib import Path

import click

from . import diagnostics, mgda, pipeline


def _load_run_config(config_path, **overrides) -> pipeline.RunConfig:
    config = pipeline.load_config(config_path) if config_path else pipeline.RunConfig()
    stage1_overrides = {}
    for key in ("seed", "epsilon"):
        value = overrides.pop(key, None)
        if value is not None:
            stage1_overrides[key] = value
    if stage1_overrides:
        config = replace(config, stage1=replace(config.stage1, **stage1_overrides))
    cleaned = {k: v for k, v in overrides.items() if v is not None}
    if cleaned:
        config = replace(config, **cleaned)
    return config


@click.group()
def main():
    """Protect batches of speech clips against voice cloning."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), help="JSON run config.")
@click.option("--input-dir", type=click.Path(), help="Directory of input WAVs.")
@click.option("--output-dir", type=click.Path(), help="Directory for artifacts.")
@click.option("--batch-size", type=int, default=None, help="Clips per universal perturbation.")
@click.option("--seed", type=int, default=None, help="Run seed for stage 1.")
@click.option("--epsilon", type=float, default=None, help="L-infinity budget for stage 1.")
@click.option("--no-stage2", is_flag=True, help="Skip per-clip refinement.")
@click.option("--workers", type=int, default=None, help="Concurrent batches/refinements.")
def protect(config_path, input_dir, output_dir, batch_size, seed, epsilon, no_stage2, workers):
    """Generate and apply perturbations; write protected WAVs + manifest."""
    config = _load_run_config(
        config_path,
        input_dir=input_dir,
        output_dir=output_dir,
        batch_size=batch_size,
        seed=seed,
        epsilon=epsilon,
        workers=workers,
    )
    if no_stage2:
        config = replace(config, stage2_enabled=False)
    if not config.input_dir or not config.output_dir:
        raise click.UsageError("input and output directories are required")
    manifest = pipeline.protect_run(config)
    total = sum(len(b["clips"]) for b in manifest["batches"])
    click.echo(f"protected {total} clip(s) in {len(manifest['batches'])} batch(es)")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), help="JSON run config.")
@click.option("--input-dir", type=click.Path(), help="Directory of original WAVs.")
@click.option("--output-dir", type=click.Path(), help="Directory of a finished protect run.")
@click.option("--report", "report_path", type=click.Path(), help="Where to write the JSON report.")
@click.option("--transcripts", type=click.Path(exists=True), help="Optional transcripts JSON.")
def evaluate(config_path, input_dir, output_dir, report_path, transcripts):
    """Compute the metrics report for a protect run."""
    config = _load_run_config(
        config_path,
        input_dir=input_dir,
        output_dir=output_dir,
        report_path=report_path,
    )
    if not config.output_dir:
        raise click.UsageError("the protect run's output directory is required")
    transcript_map = pipeline.load_transcripts(transcripts) if transcripts else None
    report, errors = pipeline.evaluate_run(config, transcript_map)
    aggregate = report["aggregate"]
    click.echo(json.dumps(aggregate))
    for error in errors:
        click.echo(f"error: {error}", err=True)
    if errors:
        sys.exit(1)


@main.command()
@click.option("--seed", type=int, default=0, help="Seed for the random probes.")
def gradcheck(seed):
    """Validate analytic gradients of every op and loss stack."""
    results = diagnostics.run_gradcheck(seed)
    failures = 0
    for result in results:
        status = "pass" if result.passed else "FAIL"
        click.echo(
            f"{status}  {result.name}: max rel error {result.max_error:.3e}"
            f" (tolerance {result.tolerance:.0e})"
        )
        failures += not result.passed
    if failures:
        click.echo(f"{failures} check(s) failed", err=True)
        sys.exit(1)


@main.command("mgda-demo")
@click.option("--tasks", type=int, default=3, help="Number of task gradients per draw.")
@click.option("--dim", type=int, default=8, help="Gradient dimensionality.")
@click.option("--draws", type=int, default=5, help="Number of random draws.")
@click.option("--seed", type=int, default=0)
def mgda_demo(tasks, dim, draws, seed):
    """Print min-norm weights and dominance margins as JSON lines."""
    for record in mgda.demo_records(tasks, dim, draws=draws, seed=seed):
        click.echo(json.dumps(record))


if __name__ == "__main__":
    main()
