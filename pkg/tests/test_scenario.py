"""Tests for scenario construction and the default testbed."""

import pytest

from signalsmith.core.contracts import Approach, Fleet, LaneType, Movement
from signalsmith.core.errors import ConfigurationError
from signalsmith.core.scenario import LaneSpec, Scenario, default_testbed, stream_seed
from signalsmith.core.signal_advisory import SignalPlan
from tests.conftest import eb_scenario


def test_default_testbed_demands_and_turning():
    testbed = default_testbed()
    assert testbed.demands[Approach.EB] == 900.0
    assert all(testbed.demands[a] == 1200.0 for a in (Approach.WB, Approach.NB, Approach.SB))
    assert testbed.right_turn_percent(Approach.SB) == 25.0
    assert testbed.right_turn_percent(Approach.NB) == 5.0
    for split in testbed.turning.values():
        assert sum(split.values()) == pytest.approx(100.0)
    assert testbed.shares[Fleet.HV] == 1.0
    assert (testbed.duration, testbed.warmup, testbed.dt) == (3600.0, 600.0, 0.1)


def test_default_testbed_lane_groups():
    groups = {g.group_id: g for g in default_testbed().lane_groups()}
    assert groups["EB_L"].lane_type is LaneType.EXCLUSIVE_LEFT
    assert groups["EB_R"].lane_type is LaneType.EXCLUSIVE_RIGHT
    assert groups["EB_T"].lane_type is LaneType.EXCLUSIVE_THROUGH
    assert len(groups["EB_T"].lane_ids) == 2
    assert groups["SB_TR"].lane_type is LaneType.SHARED_THROUGH_RIGHT
    assert len(groups["SB_TR"].lane_ids) == 2


def test_lane_ids_are_positions():
    lanes = default_testbed().lanes()
    assert [lane.lane_id for lane in lanes] == list(range(len(lanes)))
    assert lanes[0].approach is Approach.EB


def test_shares_are_validated():
    with pytest.raises(ConfigurationError, match="sum to 1") as err:
        eb_scenario(shares={Fleet.HV: 0.9})
    assert err.value.field == "shares"
    with pytest.raises(ConfigurationError, match="nonnegative"):
        eb_scenario(shares={Fleet.HV: 1.2, Fleet.CV: -0.2})
    with pytest.raises(ConfigurationError, match="shares"):
        eb_scenario(shares={"truck": 1.0})


def test_shares_accept_fleet_and_string_keys():
    by_member = eb_scenario(shares={Fleet.HV: 0.5, Fleet.CAV: 0.5})
    by_name = eb_scenario(shares={"HV": 0.5, "CAV": 0.5})
    assert by_member.shares == by_name.shares
    assert by_member.shares[Fleet.CAV] == 0.5
    assert default_testbed().with_shares({Fleet.AV: 1.0}).shares[Fleet.AV] == 1.0


def test_shares_accept_lowercase_keys():
    scenario = eb_scenario(shares={"cav": 1.0})
    assert scenario.shares[Fleet.CAV] == 1.0
    assert scenario.shares[Fleet.HV] == 0.0


def test_horizon_and_step_are_validated():
    with pytest.raises(ConfigurationError, match="duration"):
        eb_scenario(duration=60.0, warmup=60.0)
    with pytest.raises(ConfigurationError, match="dt"):
        eb_scenario(dt=0.0)


def test_movement_without_lane_is_rejected():
    scenario = eb_scenario()
    with pytest.raises(ConfigurationError, match="no lane permits it"):
        Scenario(
            shares={Fleet.HV: 1.0},
            demands={Approach.EB: 600.0},
            turning={Approach.EB: {Movement.THROUGH: 90.0, Movement.LEFT: 10.0}},
            geometry=scenario.geometry,
            plan=scenario.plan,
        )


def test_unplanned_group_is_rejected():
    with pytest.raises(ConfigurationError, match="Unknown movement group"):
        eb_scenario(plan=SignalPlan.sequential([(("WB_T",), 30.0)]))


def test_unsupported_movement_set():
    with pytest.raises(ConfigurationError, match="unsupported movement set"):
        LaneSpec("EB_LR", (Movement.LEFT, Movement.RIGHT)).lane_type


def test_with_shares_and_seed():
    base = eb_scenario()
    mixed = base.with_shares({Fleet.CV: 0.5, Fleet.AV: 0.5}, scenario_id="S07")
    assert mixed.scenario_id == "S07"
    assert mixed.shares[Fleet.CV] == 0.5
    assert base.shares[Fleet.HV] == 1.0
    assert base.with_seed(3).seed == 3


def test_with_profiles_keeps_other_fleets():
    base = eb_scenario()
    faster = base.profiles[Fleet.HV].with_overrides(cc1=1.1)
    scenario = base.with_profiles({Fleet.HV: faster})
    assert scenario.profiles[Fleet.HV].cc1 == 1.1
    assert scenario.profiles[Fleet.AV] == base.profiles[Fleet.AV]


def test_stream_seed_is_stable_and_distinct():
    assert stream_seed("S01", 1) == stream_seed("S01", 1)
    assert stream_seed("S01", 1) != stream_seed("S01", 2)
    assert stream_seed("S01", 1) != stream_seed("S02", 1)
