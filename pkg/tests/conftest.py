"""Shared fixtures: small scenarios and synthetic results tables."""

import numpy as np
import pandas as pd
import pytest

from signalsmith.core.analysis import REFERENCE_COEFFICIENTS, HeadwayInputs, predict_headway, scenario_manifest
from signalsmith.core.contracts import Approach, Columns, Fleet, LaneType, Movement
from signalsmith.core.scenario import LaneSpec, Scenario
from signalsmith.core.signal_advisory import SignalPlan
from signalsmith.core.sim_engine import run

SHARED_RT = (5.0, 15.0, 25.0)


def eb_through_plan() -> SignalPlan:
    """One 30 s green for EB_T in a 64 s cycle."""
    return SignalPlan.sequential([(("EB_T",), 30.0)], cycle_length=64.0)


def eb_scenario(shares=None, demand=600.0, duration=300.0, warmup=60.0, **kwargs) -> Scenario:
    """Single eastbound through lane, short horizon."""
    return Scenario(
        shares=shares or {Fleet.HV: 1.0},
        demands={Approach.EB: demand},
        turning=kwargs.pop("turning", {Approach.EB: {Movement.THROUGH: 100.0}}),
        geometry=kwargs.pop("geometry", {Approach.EB: (LaneSpec("EB_T", (Movement.THROUGH,)),)}),
        plan=kwargs.pop("plan", eb_through_plan()),
        duration=duration,
        warmup=warmup,
        seed=kwargs.pop("seed", 7),
        link_length=kwargs.pop("link_length", 300.0),
        scenario_id=kwargs.pop("scenario_id", "eb"),
        **kwargs,
    )


@pytest.fixture
def small_scenario() -> Scenario:
    return eb_scenario()


@pytest.fixture
def mixed_scenario() -> Scenario:
    return eb_scenario(
        shares={Fleet.HV: 0.25, Fleet.CV: 0.25, Fleet.AV: 0.25, Fleet.CAV: 0.25}, scenario_id="mixed"
    )


@pytest.fixture(scope="session")
def mixed_run_log():
    scenario = eb_scenario(
        shares={Fleet.HV: 0.25, Fleet.CV: 0.25, Fleet.AV: 0.25, Fleet.CAV: 0.25}, scenario_id="mixed"
    )
    return run(scenario)


def synthetic_results(coefficients=None, noise=0.0, seed=0) -> pd.DataFrame:
    """Results rows on the 0.2 share grid whose h_s follows the additive model.

    Shared through-right rows repeat the through row's noise, so the shared
    terms carry no signal of their own.
    """
    coefficients = dict(coefficients or REFERENCE_COEFFICIENTS)
    rng = np.random.default_rng(seed)
    lane_types = [LaneType.EXCLUSIVE_THROUGH, LaneType.EXCLUSIVE_LEFT, LaneType.EXCLUSIVE_RIGHT]
    rows = []
    for record in scenario_manifest(0.2).to_dict("records"):
        shares = {k: record[k] for k in (Columns.HV, Columns.CV, Columns.AV, Columns.CAV)}
        through_noise = 0.0
        for lane_type in lane_types:
            eps = noise * rng.standard_normal()
            if lane_type is LaneType.EXCLUSIVE_THROUGH:
                through_noise = eps
            rows.append(_row(record, shares, lane_type, 0.0, coefficients, eps))
        for rt in SHARED_RT:
            rows.append(_row(record, shares, LaneType.SHARED_THROUGH_RIGHT, rt, coefficients, through_noise))
    return pd.DataFrame(rows)


def _row(record, shares, lane_type, rt, coefficients, eps):
    inputs = HeadwayInputs.for_lane(shares, lane_type, rt=rt)
    return {
        Columns.SCENARIO_ID: record[Columns.SCENARIO_ID],
        Columns.SEED: 1,
        Columns.LANE_GROUP: f"{lane_type.value}_{rt:g}",
        Columns.APPROACH: "EB",
        Columns.LANE_TYPE: lane_type.value,
        **shares,
        Columns.D_EXL: inputs.d_exl,
        Columns.D_EXR: inputs.d_exr,
        Columns.D_SHTR: inputs.d_shtr,
        Columns.RT: inputs.rt,
        Columns.H_S: predict_headway(coefficients, inputs) + eps,
        Columns.N_QUEUES: 40,
    }


@pytest.fixture
def results_csv(tmp_path):
    path = tmp_path / "results.csv"
    synthetic_results(noise=0.02, seed=3).to_csv(path, index=False)
    return path


SMALL_SCENARIO_YAML = """\
scenario_id: small
shares: {HV: 0.5, CV: 0.0, AV: 0.25, CAV: 0.25}
demands: {EB: 600}
turning:
  EB: {Through: 100}
geometry:
  EB:
    - {lane_group: EB_T, movements: [Through]}
plan:
  cycle_length: 64
  phases:
    - {groups: [EB_T], green: 30}
duration: 120
warmup: 30
seed: 7
link_length: 300
"""


@pytest.fixture
def scenario_yaml(tmp_path):
    path = tmp_path / "small.yaml"
    path.write_text(SMALL_SCENARIO_YAML)
    return path
