"""End-to-end tests of the run, sweep and analysis pipelines on small scenarios."""

import json

import pandas as pd
import pytest

from signalsmith.core.contracts import RESULTS_COLUMNS, Columns, Fleet, LaneType
from signalsmith.core.errors import ConfigurationError
from signalsmith.core.pipelines import (
    AnalysisJob,
    RunJob,
    SweepJob,
    fit_models,
    fleet_summary,
    run_analysis_pipeline,
    run_run_pipeline,
    run_sweep_pipeline,
)
from tests.conftest import eb_scenario, synthetic_results


def test_run_pipeline_writes_tables(tmp_path, small_scenario):
    results = run_run_pipeline(RunJob(scenario=small_scenario, output_dir=str(tmp_path / "run")))
    assert set(results.tables) == {"results", "periods", "vehicles", "events"}
    table = pd.read_csv(results.tables["results"])
    assert list(table.columns) == RESULTS_COLUMNS
    metrics = json.loads((tmp_path / "run" / "metrics.json").read_text())
    assert metrics["generated"] == metrics["exited"] + metrics["active"] + metrics["buffered"]
    assert results.metadata["seed"] == small_scenario.seed


def test_run_pipeline_trajectories(tmp_path):
    job = RunJob(scenario=eb_scenario(duration=30.0, warmup=0.0), output_dir=str(tmp_path), record_trajectories=True)
    assert "trajectories" in run_run_pipeline(job).tables


def test_sweep_job_layout():
    job = SweepJob.from_base(eb_scenario(), output_dir="unused", seed_base=5, reps=2, step=0.5)
    assert job.seeds == [5, 6]
    assert len(job.grid) == 10
    scenarios = job.scenarios()
    assert len(scenarios) == 20
    assert [s.seed for s in scenarios[:2]] == [5, 6]
    assert scenarios[0].scenario_id == "S00"
    assert scenarios[0].shares[Fleet.HV] == 1.0


def test_sweep_job_rejects_duplicate_seeds():
    with pytest.raises(ConfigurationError, match="distinct"):
        SweepJob(base_scenario=eb_scenario(), grid=[{}], seeds=[1, 1], output_dir="unused")


def test_sweep_pipeline(tmp_path):
    base = eb_scenario(duration=60.0, warmup=10.0)
    job = SweepJob.from_base(base, output_dir=str(tmp_path), reps=1, step=0.5)
    results = run_sweep_pipeline(job)
    assert results.metrics["runs"] == 10
    merged = pd.read_csv(results.tables["results"])
    # one lane group row and one intersection row per run
    assert len(merged) == 20
    assert merged[Columns.SCENARIO_ID].is_monotonic_increasing
    assert set(merged[Columns.LANE_TYPE]) == {LaneType.EXCLUSIVE_THROUGH.value, LaneType.INTERSECTION.value}
    manifest = pd.read_csv(results.tables["manifest"])
    assert len(manifest) == 10


def test_fit_models_without_shared_rows():
    rows = synthetic_results(noise=0.02, seed=1)
    rows = rows[rows[Columns.LANE_TYPE] != LaneType.SHARED_THROUGH_RIGHT.value]
    full, reduced = fit_models(rows)
    assert full is None
    assert reduced.n_obs == 56 * 3


def test_fit_models_with_shared_rows():
    full, reduced = fit_models(synthetic_results(noise=0.02, seed=1))
    assert full is not None
    assert Columns.D_SHTR in full.terms
    assert Columns.D_SHTR not in reduced.terms


def test_fleet_summary_uses_single_fleet_corners():
    rows = []
    for scenario_id, share in (("S00", Columns.HV), ("S55", Columns.CAV), ("S10", None)):
        shares = {c: 0.0 for c in (Columns.HV, Columns.CV, Columns.AV, Columns.CAV)}
        if share:
            shares[share] = 1.0
        else:
            shares.update({Columns.HV: 0.5, Columns.AV: 0.5})
        for seed, h in ((1, 2.0), (2, 2.2)):
            rows.append(
                {
                    Columns.SCENARIO_ID: scenario_id,
                    Columns.SEED: seed,
                    Columns.LANE_TYPE: LaneType.INTERSECTION.value,
                    **shares,
                    Columns.H_S: h,
                    Columns.DELAY: 30.0,
                    Columns.TRAVEL_TIME: 60.0,
                    Columns.QUEUE_LENGTH: 4.0,
                    Columns.THROUGHPUT: 500.0,
                    Columns.STOPS: 0.5,
                }
            )
    summary = fleet_summary(pd.DataFrame(rows))
    assert summary[Columns.FLEET].tolist() == ["HV", "CAV"]
    assert summary["replications"].tolist() == [2, 2]
    assert summary[Columns.H_S].tolist() == pytest.approx([2.1, 2.1])


def test_analysis_pipeline(tmp_path, results_csv):
    job = AnalysisJob(results_path=str(results_csv), output_dir=str(tmp_path / "analysis"))
    results = run_analysis_pipeline(job)
    expected = {
        "regression_reduced",
        "regression_full",
        "caf_table",
        "fleet_summary",
        "capacity",
        "regression_report",
        *(f"grid_{q}_hv{hv}" for q in ("headway", "caf") for hv in ("00", "20", "40", "60")),
    }
    assert set(results.tables) == expected
    assert results.metrics["n_obs"] == 336
    assert results.metrics["coefficients"][Columns.CAV] == pytest.approx(-0.91, abs=0.05)
    grid = pd.read_csv(results.tables["grid_headway_hv00"])
    assert grid.shape == (6, 7)
    assert "Reduced model" in (tmp_path / "analysis" / "regression_report.txt").read_text()


def test_analysis_pipeline_rejects_incomplete_results(tmp_path):
    path = tmp_path / "results.csv"
    synthetic_results().drop(columns=[Columns.RT]).to_csv(path, index=False)
    with pytest.raises(ValueError, match=Columns.RT):
        run_analysis_pipeline(AnalysisJob(results_path=str(path), output_dir=str(tmp_path / "out")))
