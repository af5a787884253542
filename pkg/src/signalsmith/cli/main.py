"""CLI entrypoint using Typer.

This module provides the command-line interface for running SignalSmith pipelines.
"""

import logging
from contextlib import contextmanager
from typing import Optional

import typer
from pydantic import ValidationError

from signalsmith.api.client import SignalSmithClient
from signalsmith.api.config import (
    AnalysisConfig,
    CalibrationConfig,
    RunConfig,
    ScenarioConfig,
    SweepConfig,
    load_profile_overrides,
    load_scenario,
    parse_model,
)
from signalsmith.core.driver_model import builtin_profiles
from signalsmith.core.errors import SignalSmithError, StateCorruptionError, SweepError
from signalsmith.core.io import load_yaml

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(levelname)s [%(name)s]: %(message)s"
EXIT_CONFIG = 1
EXIT_INVARIANT = 2

app = typer.Typer(
    name="signalsmith",
    help="SignalSmith: signalized-intersection capacity under mixed connected and automated fleets",
    add_completion=False,
)


@app.callback()
def main(
    log_level: str = typer.Option("WARNING", "--log-level", help="DEBUG, INFO, WARNING or ERROR"),
):
    """Configure logging once for every command."""
    logging.basicConfig(level=log_level.upper(), format=LOG_FORMAT)


def _exit_code(error: BaseException) -> int:
    if isinstance(error, StateCorruptionError):
        return EXIT_INVARIANT
    if isinstance(error, SweepError) and isinstance(error.cause, StateCorruptionError):
        return EXIT_INVARIANT
    return EXIT_CONFIG


@contextmanager
def _reporting():
    """Turn library errors into an ``Error: ...`` line and a nonzero exit."""
    try:
        yield
    except (SignalSmithError, ValidationError, ValueError, FileNotFoundError) as e:
        logger.debug("Command failed", exc_info=True)
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(_exit_code(e)) from e


def _echo_tables(tables: dict[str, str]) -> None:
    typer.echo(f"  Tables: {sorted(tables)}")


@app.command()
def run(
    scenario: str = typer.Option(..., "--scenario", "-s", help="Path to scenario YAML"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Replication seed (overrides the scenario's)"),
    out: str = typer.Option("runs/run", "--out", "-o", help="Output directory"),
    profiles: Optional[str] = typer.Option(None, "--profiles", help="Profile override YAML"),
    trajectories: bool = typer.Option(False, "--trajectories", help="Write per-step trajectories"),
):
    """Run one replication of a scenario."""
    with _reporting():
        config = RunConfig(scenario=scenario, out=out, seed=seed, profiles=profiles, trajectories=trajectories)
        results = SignalSmithClient().run(config)
    typer.echo("✓ Replication completed")
    typer.echo(f"  Output directory: {results.output_dir}")
    typer.echo(f"  Intersection h_s: {results.metrics['h_s']:.3f} s")
    _echo_tables(results.tables)


@app.command()
def sweep(
    config: Optional[str] = typer.Option(None, "--config", "-c", help="Sweep job YAML"),
    scenario: Optional[str] = typer.Option(None, "--scenario", "-s", help="Base scenario YAML"),
    seed_base: Optional[int] = typer.Option(None, "--seed-base", help="First replication seed"),
    reps: Optional[int] = typer.Option(None, "--reps", help="Replications per scenario"),
    step: Optional[float] = typer.Option(None, "--step", help="Share grid step"),
    out: Optional[str] = typer.Option(None, "--out", "-o", help="Output directory"),
    parallelism: Optional[int] = typer.Option(None, "--parallelism", "-j", help="Concurrent replications"),
    profiles: Optional[str] = typer.Option(None, "--profiles", help="Profile override YAML"),
):
    """Run every share combination for every seed and merge the results."""
    with _reporting():
        values = {}
        if config is not None:
            values = SweepConfig.from_yaml(config).model_dump()
        flags = {
            "scenario": scenario,
            "seed_base": seed_base,
            "reps": reps,
            "step": step,
            "out": out,
            "parallelism": parallelism,
            "profiles": profiles,
        }
        values.update({k: v for k, v in flags.items() if v is not None})
        if "scenario" not in values:
            raise ValueError("sweep needs --scenario or a --config with a scenario path")
        results = SignalSmithClient().sweep(SweepConfig(**values))
    typer.echo("✓ Sweep completed")
    typer.echo(f"  Output directory: {results.output_dir}")
    typer.echo(f"  Runs: {results.metrics['runs']} ({results.metrics['scenarios']} scenarios)")
    _echo_tables(results.tables)


@app.command()
def calibrate(
    config: str = typer.Option(..., "--config", "-c", help="Calibration job YAML"),
    out: Optional[str] = typer.Option(None, "--out", "-o", help="Output directory"),
    parallelism: Optional[int] = typer.Option(None, "--parallelism", "-j", help="Concurrent replications"),
):
    """Search cc0/cc1 for the human-driven fleet against the target base headway."""
    with _reporting():
        job_config = CalibrationConfig.from_yaml(config)
        updates = {k: v for k, v in (("out", out), ("parallelism", parallelism)) if v is not None}
        results = SignalSmithClient().calibrate(job_config.model_copy(update=updates))
    metrics = results.metrics
    typer.echo("✓ Calibration completed")
    typer.echo(f"  cc0={metrics['cc0']:g} cc1={metrics['cc1']:g}")
    typer.echo(f"  Achieved h_s: {metrics['achieved_h']:.3f} s (target {metrics['target_h']:.3f} s)")
    typer.echo(f"  Output directory: {results.output_dir}")


@app.command()
def analyze(
    results: str = typer.Argument(..., help="Merged results CSV from a sweep"),
    out: str = typer.Option("runs/analysis", "--out", "-o", help="Output directory"),
    scenario: Optional[str] = typer.Option(None, "--scenario", "-s", help="Scenario for the capacity table"),
    step: float = typer.Option(0.2, "--step", help="Share grid step"),
):
    """Fit the headway regression and write CAF, grid and capacity tables."""
    with _reporting():
        config = AnalysisConfig(results=results, out=out, scenario=scenario, step=step)
        analysis = SignalSmithClient().analyze(config)
    typer.echo("✓ Analysis completed")
    typer.echo(f"  Observations: {analysis.metrics['n_obs']}, adjusted R^2: {analysis.metrics['adj_r2']:.3f}")
    for term, value in analysis.coefficients.items():
        typer.echo(f"  {term}: {value:+.4f}")
    typer.echo(f"  Output directory: {analysis.output_dir}")


_FLEET_KEYS = {"HV", "CV", "AV", "CAV"}


@app.command()
def validate(
    config: str = typer.Option(..., "--config", "-c", help="Path to config YAML file"),
):
    """Validate a scenario, sweep, calibration or profile-override file without running it."""
    try:
        document = load_yaml(config)
        data = document.data if isinstance(document.data, dict) else {}
        keys = set(data)
        if keys and {str(k).upper() for k in keys} <= _FLEET_KEYS:
            load_profile_overrides(config, builtin_profiles())
            kind = "Profile overrides"
        elif keys & {"cc0_grid", "cc1_grid", "target_h"}:
            parse_model(CalibrationConfig, document)
            kind = "Calibration config"
        elif keys & {"reps", "seed_base", "step"} or (keys and "scenario" in keys):
            parse_model(SweepConfig, document)
            kind = "Sweep config"
        else:
            parse_model(ScenarioConfig, document)
            load_scenario(config)
            kind = "Scenario config"
        typer.echo(f"✓ Config file is valid: {config}")
        typer.echo(f"  Type: {kind}")
    except (SignalSmithError, ValidationError, ValueError) as e:
        typer.echo(f"✗ Config file validation failed: {e}", err=True)
        raise typer.Exit(EXIT_CONFIG) from e


@app.command()
def info():
    """Display information about SignalSmith."""
    typer.echo("SignalSmith: signalized-intersection capacity under mixed connected and automated fleets")
    typer.echo("")
    typer.echo("Commands:")
    typer.echo("  - run: one replication of a scenario")
    typer.echo("  - sweep: all fleet-share combinations x seeds, merged results")
    typer.echo("  - calibrate: cc0/cc1 grid search against the base headway")
    typer.echo("  - analyze: headway regression, CAF tables, heatmap grids, capacities")
    typer.echo("")
    typer.echo("Usage:")
    typer.echo("  signalsmith run --scenario configs/default_testbed.yaml --seed 42 --out runs/base")
    typer.echo("  signalsmith sweep --config configs/sweep.yaml")
    typer.echo("  signalsmith calibrate --config configs/calibration.yaml")
    typer.echo("  signalsmith analyze runs/sweep/results.csv --out runs/analysis")
    typer.echo("  signalsmith validate --config <config.yaml>")


if __name__ == "__main__":
    app()
