"""Define the run, sweep, calibrate and analyze pipelines as functions.

Each pipeline takes a core job record, writes its artifacts under the job's
output directory and returns a Results record listing them. Pipelines own
orchestration only; the numerical work lives in the engine, measurement and
analysis modules.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import pandas as pd

from signalsmith.core.analysis import (
    REDUCED_TERMS,
    RegressionResult,
    capacity_table,
    caf_table,
    fit_headway_model,
    grid_export,
    regression_rows,
    scenario_manifest,
)
from signalsmith.core.batch import run_batch
from signalsmith.core.calibration import (
    DEFAULT_CC0_GRID,
    DEFAULT_CC1_GRID,
    DEFAULT_TARGET_H,
    calibrate_base,
)
from signalsmith.core.contracts import FLEET_ORDER, RESULTS_SPEC, Columns, LaneType, validate_schema
from signalsmith.core.errors import ConfigurationError
from signalsmith.core.io import load_csv, save_dataframe, save_json, save_yaml
from signalsmith.core.measurement import summarize_run
from signalsmith.core.scenario import Scenario, default_testbed
from signalsmith.core.sim_engine import RunLog, run

logger = logging.getLogger(__name__)

SORT_KEYS = [Columns.SCENARIO_ID, Columns.SEED, Columns.LANE_GROUP]
PERIOD_SORT_KEYS = [Columns.SCENARIO_ID, Columns.SEED, Columns.LANE_GROUP, Columns.PERIOD]
HV_LEVELS = (0.0, 0.2, 0.4, 0.6)
FLEET_MEASURES = [
    Columns.H_S,
    Columns.DELAY,
    Columns.TRAVEL_TIME,
    Columns.QUEUE_LENGTH,
    Columns.THROUGHPUT,
    Columns.STOPS,
]


@dataclass
class RunJob:
    """One replication of one scenario."""

    scenario: Scenario
    output_dir: str
    record_trajectories: bool = False


@dataclass
class SweepJob:
    """Every share combination of the grid, each run for every seed."""

    base_scenario: Scenario
    grid: list[dict[str, float]]
    seeds: list[int]
    output_dir: str
    parallelism: int = 1

    def __post_init__(self):
        if not self.grid:
            raise ConfigurationError("Sweep grid is empty", field="step")
        if not self.seeds:
            raise ConfigurationError("Sweep needs at least one seed", field="reps")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigurationError("Sweep seeds must be distinct", field="seeds")
        if self.parallelism < 1:
            raise ConfigurationError("parallelism must be >= 1", field="parallelism")

    @classmethod
    def from_base(
        cls,
        base_scenario: Scenario,
        output_dir: str,
        seed_base: int = 1,
        reps: int = 10,
        step: float = 0.2,
        parallelism: int = 1,
    ) -> SweepJob:
        """Job with seeds ``seed_base .. seed_base + reps - 1`` over ``scenario_grid(step)``."""
        manifest = scenario_manifest(step)
        return cls(
            base_scenario=base_scenario,
            grid=manifest.to_dict("records"),
            seeds=[seed_base + r for r in range(reps)],
            output_dir=output_dir,
            parallelism=parallelism,
        )

    def manifest(self) -> pd.DataFrame:
        columns = [Columns.SCENARIO_ID, Columns.HV, Columns.CV, Columns.AV, Columns.CAV]
        return pd.DataFrame(self.grid, columns=columns)

    def scenarios(self) -> list[Scenario]:
        """Scenario per (grid row, seed), grid-major."""
        built = []
        for row in self.grid:
            shares = {fleet: row[fleet.value.lower()] for fleet in FLEET_ORDER}
            scenario = self.base_scenario.with_shares(shares, scenario_id=row[Columns.SCENARIO_ID])
            built.extend(scenario.with_seed(seed) for seed in self.seeds)
        return built


@dataclass
class CalibrationJob:
    """Grid search of cc0/cc1 against a target base headway."""

    scenario_base: Scenario
    output_dir: str
    target_h: float = DEFAULT_TARGET_H
    cc0_grid: Sequence[float] = DEFAULT_CC0_GRID
    cc1_grid: Sequence[float] = DEFAULT_CC1_GRID
    replications: int = 3
    seed_base: int = 1
    parallelism: int = 1


@dataclass
class AnalysisJob:
    """Regression and capacity analysis of a sweep's results file."""

    results_path: str
    output_dir: str
    step: float = 0.2
    hv_levels: Sequence[float] = HV_LEVELS
    scenario: Optional[Scenario] = None


@dataclass
class Results:
    """Base results from pipeline execution."""

    metrics: dict[str, Any]
    output_dir: str
    tables: dict[str, str] = field(default_factory=dict)  # table_name -> file_path
    metadata: dict[str, Any] = field(default_factory=dict)


def _summarize(scenario: Scenario) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Worker: run one replication and return its results and period rows."""
    summary = summarize_run(run(scenario))
    return summary.to_frame(), summary.periods


def run_replication(scenario: Scenario, record_trajectories: bool = False) -> RunLog:
    return run(scenario, record_trajectories=record_trajectories)


def _save_tables(output_dir: Path, frames: dict[str, pd.DataFrame]) -> dict[str, str]:
    return {name: str(save_dataframe(frame, output_dir / f"{name}.csv")) for name, frame in frames.items()}


def _intersection_metrics(results: pd.DataFrame) -> dict[str, Any]:
    row = results[results[Columns.LANE_TYPE] == LaneType.INTERSECTION.value].iloc[0]
    return {measure: float(row[measure]) for measure in FLEET_MEASURES}


def run_run_pipeline(job: RunJob) -> Results:
    """Run one replication and write its results, periods, vehicles and events."""
    output_dir = Path(job.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    scenario = job.scenario

    run_log = run_replication(scenario, record_trajectories=job.record_trajectories)
    summary = summarize_run(run_log)
    results = summary.to_frame()

    frames = {
        "results": results,
        "periods": summary.periods,
        "vehicles": run_log.vehicles,
        "events": run_log.events(),
    }
    if run_log.trajectories is not None:
        frames["trajectories"] = run_log.trajectories
    tables = _save_tables(output_dir, frames)

    metrics = {**_intersection_metrics(results), **run_log.diagnostics}
    save_json(metrics, output_dir / "metrics.json")

    return Results(
        metrics=metrics,
        output_dir=str(output_dir),
        tables=tables,
        metadata={"pipeline": "run", "scenario_id": scenario.scenario_id, "seed": scenario.seed},
    )


def run_sweep_pipeline(job: SweepJob) -> Results:
    """Run every (scenario, seed) pair and merge the rows in a fixed order."""
    output_dir = Path(job.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    scenarios = job.scenarios()
    logger.info(
        "Sweeping %d scenarios x %d seeds with parallelism %d", len(job.grid), len(job.seeds), job.parallelism
    )

    outcomes = run_batch(_summarize, scenarios, parallelism=job.parallelism)
    results = pd.concat([r for r, _ in outcomes], ignore_index=True)
    results = results.sort_values(SORT_KEYS, kind="mergesort").reset_index(drop=True)
    periods = pd.concat([p for _, p in outcomes], ignore_index=True)
    periods = periods.sort_values(PERIOD_SORT_KEYS, kind="mergesort").reset_index(drop=True)

    tables = _save_tables(output_dir, {"results": results, "periods": periods, "manifest": job.manifest()})
    metrics = {
        "runs": len(scenarios),
        "scenarios": len(job.grid),
        "seeds": list(job.seeds),
        "low_sample_rows": int(results[Columns.LOW_SAMPLE].astype(bool).sum()),
    }
    save_json(metrics, output_dir / "metrics.json")

    return Results(metrics=metrics, output_dir=str(output_dir), tables=tables, metadata={"pipeline": "sweep"})


def run_calibration_pipeline(job: CalibrationJob) -> Results:
    """Calibrate cc0/cc1 and write the grid table plus a profile-override file."""
    output_dir = Path(job.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)

    result = calibrate_base(
        job.target_h,
        job.cc0_grid,
        job.cc1_grid,
        job.scenario_base,
        replications=job.replications,
        seed_base=job.seed_base,
        parallelism=job.parallelism,
    )
    tables = _save_tables(output_dir, {"calibration": result.table})
    tables["profiles"] = str(save_yaml(result.overrides(), output_dir / "calibrated_profiles.yaml"))

    metrics = {
        "cc0": result.cc0,
        "cc1": result.cc1,
        "achieved_h": result.achieved_h,
        "target_h": result.target_h,
        "abs_error": abs(result.achieved_h - result.target_h),
    }
    save_json(metrics, output_dir / "metrics.json")

    return Results(metrics=metrics, output_dir=str(output_dir), tables=tables, metadata={"pipeline": "calibrate"})


def fit_models(rows: pd.DataFrame) -> tuple[Optional[RegressionResult], RegressionResult]:
    """Full model (when shared lanes were measured) and the reduced model."""
    has_shared = bool(regression_rows(rows)[Columns.D_SHTR].astype(bool).any())
    if not has_shared:
        logger.info("No measured shared through-right rows; fitting the reduced model only")
        return None, fit_headway_model(rows, include_shared_terms=False)
    full = fit_headway_model(rows, include_shared_terms=True)
    reduced = full.reduced if full.reduced is not None else fit_headway_model(rows, include_shared_terms=False)
    return full, reduced


def fleet_summary(results: pd.DataFrame) -> pd.DataFrame:
    """Intersection measures of the four single-fleet scenarios, averaged over seeds."""
    intersection = results[results[Columns.LANE_TYPE] == LaneType.INTERSECTION.value]
    rows = []
    for fleet in FLEET_ORDER:
        share = fleet.value.lower()
        if share not in intersection.columns:
            continue
        corner = intersection[np.isclose(intersection[share].astype(float), 1.0)]
        if corner.empty:
            continue
        rows.append(
            {
                Columns.FLEET: fleet.value,
                Columns.SCENARIO_ID: corner[Columns.SCENARIO_ID].iloc[0],
                "replications": len(corner),
                **{measure: float(corner[measure].mean()) for measure in FLEET_MEASURES},
            }
        )
    return pd.DataFrame(
        rows, columns=[Columns.FLEET, Columns.SCENARIO_ID, "replications", *FLEET_MEASURES]
    )


def _regression_report(full: Optional[RegressionResult], reduced: RegressionResult) -> str:
    sections = []
    if full is not None:
        sections.append("Full model (with shared through-right terms)\n" + full.summary())
    sections.append("Reduced model\n" + reduced.summary())
    return "\n\n".join(sections) + "\n"


def run_analysis_pipeline(job: AnalysisJob) -> Results:
    """Fit the headway regression and write coefficient, CAF, grid and capacity tables."""
    output_dir = Path(job.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)

    rows = load_csv(job.results_path)
    validate_schema(set(rows.columns), RESULTS_SPEC)
    full, reduced = fit_models(rows)

    frames = {"regression_reduced": reduced.to_frame(), "caf_table": caf_table(reduced, step=job.step, results=rows)}
    if full is not None:
        frames["regression_full"] = full.to_frame()
    for hv in job.hv_levels:
        label = f"hv{round(hv * 100):02d}"
        for quantity in ("headway", "caf"):
            grid = grid_export(reduced, hv, quantity=quantity, step=job.step)
            grid.columns = [f"{Columns.CAV}={c:g}" for c in grid.columns]
            frames[f"grid_{quantity}_{label}"] = grid.reset_index()
    frames["fleet_summary"] = fleet_summary(rows)
    frames["capacity"] = capacity_table(
        reduced, job.scenario or default_testbed(), step=job.step, results=rows
    )
    tables = _save_tables(output_dir, frames)

    report_path = output_dir / "regression_report.txt"
    report_path.write_text(_regression_report(full, reduced), encoding="utf-8")
    tables["regression_report"] = str(report_path)

    metrics = {
        "n_obs": reduced.n_obs,
        "adj_r2": reduced.adj_r2,
        "coefficients": {term: reduced.coefficients[term] for term in REDUCED_TERMS},
    }
    if full is not None:
        metrics["full_adj_r2"] = full.adj_r2
        metrics["shared_p_value"] = full.p_values[Columns.D_SHTR]
    save_json(metrics, output_dir / "metrics.json")

    return Results(metrics=metrics, output_dir=str(output_dir), tables=tables, metadata={"pipeline": "analyze"})
