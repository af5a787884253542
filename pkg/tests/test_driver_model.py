"""Tests for the car-following model and driver profiles."""

import numpy as np
import pytest

from signalsmith.core.contracts import AmberMode, Approach, Fleet, Movement
from signalsmith.core.driver_model import (
    B_EMAX,
    LeaderView,
    apply_profile_overrides,
    builtin_profile,
    builtin_profiles,
    compute_acceleration,
    enforce_absolute_braking,
    max_acceleration,
    sample_accel_multiplier,
    sample_desired_speed,
)
from signalsmith.core.errors import ConfigurationError, StateCorruptionError
from signalsmith.core.sim_engine import VehicleState


def vehicle(speed, fleet=Fleet.HV, accel=0.0):
    return VehicleState(
        id=1,
        fleet=fleet,
        approach=Approach.EB,
        movement=Movement.THROUGH,
        lane_id=0,
        position=-200.0,
        speed=speed,
        accel=accel,
    )


def test_builtin_profiles():
    profiles = builtin_profiles()
    assert set(profiles) == set(Fleet)
    assert profiles[Fleet.HV].cc0 == 1.5
    assert profiles[Fleet.AV].eabd_enabled
    assert not profiles[Fleet.AV].implicit_stochasticity
    assert profiles[Fleet.CAV].interaction_vehicle_count == 2
    assert profiles[Fleet.CAV].amber_mode is AmberMode.ONE_DECISION
    assert profiles[Fleet.HV].amber_mode is AmberMode.CONTINUOUS_CHECK


def test_profile_validation():
    hv = builtin_profile(Fleet.HV)
    with pytest.raises(ConfigurationError, match="cc1"):
        hv.with_overrides(cc1=-1.0)
    with pytest.raises(ConfigurationError, match="only allowed for CAV"):
        hv.with_overrides(interaction_vehicle_count=2)
    with pytest.raises(ConfigurationError, match="Unknown profile field"):
        hv.with_overrides(cc10=1.0)
    assert hv.with_overrides(cc0=1.25).cc0 == 1.25


def test_apply_profile_overrides():
    profiles = apply_profile_overrides(builtin_profiles(), {"hv": {"cc1": 1.2}, "CAV": {"cc0": 0.8}})
    assert profiles[Fleet.HV].cc1 == 1.2
    assert profiles[Fleet.CAV].cc0 == 0.8
    assert profiles[Fleet.CV] == builtin_profile(Fleet.CV)

    with pytest.raises(ConfigurationError, match="Unknown fleet"):
        apply_profile_overrides(builtin_profiles(), {"truck": {"cc0": 2.0}})


def test_max_acceleration_interpolates():
    assert max_acceleration(0.0, 3.5, 1.5) == pytest.approx(3.5)
    assert max_acceleration(22.35, 3.5, 1.5) == pytest.approx(1.5)
    assert max_acceleration(40.0, 3.5, 1.5) == pytest.approx(1.5)
    assert 1.5 < max_acceleration(10.0, 3.5, 1.5) < 3.5


def test_free_vehicle_accelerates_toward_desired_speed():
    hv = builtin_profile(Fleet.HV)
    accel = compute_acceleration(vehicle(10.0), [], hv, desired_speed=15.0, in_reduced_safety_zone=False)
    assert 0 < accel <= max_acceleration(10.0, hv.cc8, hv.cc9) + 1e-12


def test_free_vehicle_at_desired_speed_keeps_it():
    accel = compute_acceleration(
        vehicle(15.0), [], builtin_profile(Fleet.HV), desired_speed=15.0, in_reduced_safety_zone=False
    )
    assert accel == pytest.approx(0.0, abs=1e-9)


def test_fast_approach_to_stopped_leader_brakes_at_limit():
    leader = LeaderView(net_gap=20.0, leader_speed=0.0, leader_accel=0.0)
    accel = compute_acceleration(
        vehicle(15.0), [leader], builtin_profile(Fleet.HV), desired_speed=15.0, in_reduced_safety_zone=False
    )
    assert accel == pytest.approx(-B_EMAX)


def test_standstill_behind_stopped_leader_stays_put():
    leader = LeaderView(net_gap=1.5, leader_speed=0.0, leader_accel=0.0)
    accel = compute_acceleration(
        vehicle(0.0), [leader], builtin_profile(Fleet.HV), desired_speed=15.0, in_reduced_safety_zone=False
    )
    assert accel == pytest.approx(0.0, abs=1e-12)


def test_reduced_safety_zone_lets_queue_close_up():
    hv = builtin_profile(Fleet.HV)
    bar = [LeaderView.stop_bar(3.0)]
    outside = compute_acceleration(vehicle(0.0), bar, hv, desired_speed=15.0, in_reduced_safety_zone=False)
    inside = compute_acceleration(vehicle(0.0), bar, hv, desired_speed=15.0, in_reduced_safety_zone=True)
    assert outside < 0 < inside


def test_negative_gap_is_state_corruption():
    leader = LeaderView(net_gap=-0.2, leader_speed=5.0, leader_accel=0.0)
    with pytest.raises(StateCorruptionError, match="Negative net gap"):
        compute_acceleration(
            vehicle(5.0), [leader], builtin_profile(Fleet.HV), desired_speed=15.0, in_reduced_safety_zone=False
        )


def test_too_many_leaders():
    leaders = [LeaderView(30.0, 10.0, 0.0), LeaderView(60.0, 10.0, 0.0)]
    with pytest.raises(ValueError, match="interaction_vehicle_count"):
        compute_acceleration(
            vehicle(10.0), leaders, builtin_profile(Fleet.HV), desired_speed=15.0, in_reduced_safety_zone=False
        )
    # CAV anticipates two vehicles
    accel = compute_acceleration(
        vehicle(10.0, Fleet.CAV), leaders, builtin_profile(Fleet.CAV), desired_speed=15.0, in_reduced_safety_zone=False
    )
    assert np.isfinite(accel)


def test_second_leader_can_only_lower_cav_acceleration():
    cav = builtin_profile(Fleet.CAV)
    near = LeaderView(40.0, 12.0, 0.0)
    far_stopped = LeaderView(50.0, 0.0, 0.0)
    one = compute_acceleration(vehicle(12.0, Fleet.CAV), [near], cav, 15.0, False)
    two = compute_acceleration(vehicle(12.0, Fleet.CAV), [near, far_stopped], cav, 15.0, False)
    assert two <= one


def test_enforce_absolute_braking_cases():
    # far leader: candidate passes unchanged
    assert enforce_absolute_braking(1.0, 10.0, 100.0) == pytest.approx(1.0)
    # standing vehicle keeps its candidate
    assert enforce_absolute_braking(2.0, 0.0, 0.5) == pytest.approx(2.0)
    # infeasible: brake as hard as allowed
    assert enforce_absolute_braking(1.0, 10.0, 5.0) == pytest.approx(-B_EMAX)


def test_enforce_absolute_braking_keeps_brick_wall_gap():
    rng = np.random.default_rng(11)
    dt = 0.1
    checked = 0
    for _ in range(500):
        v = rng.uniform(0.1, 20.0)
        gap = rng.uniform(0.5, 60.0)
        candidate = rng.uniform(-2.0, 3.0)
        accel = enforce_absolute_braking(candidate, v, gap)
        assert accel <= candidate + 1e-12
        if accel <= -B_EMAX + 1e-9:
            continue
        v_next = max(v + accel * dt, 0.0)
        gap_next = gap - 0.5 * (v + v_next) * dt
        assert gap_next >= v_next**2 / (2 * B_EMAX) - 1e-9
        checked += 1
    assert checked > 100


def test_sample_desired_speed():
    rng = np.random.default_rng(0)
    speeds = [sample_desired_speed(Fleet.HV, rng, v_base=15.6) for _ in range(200)]
    assert min(speeds) >= 0.95 * 15.6
    assert max(speeds) <= 1.05 * 15.6
    assert len(set(speeds)) > 1
    assert sample_desired_speed(Fleet.AV, rng, v_base=15.6) == 15.6
    assert sample_desired_speed(Fleet.CAV, rng, v_base=12.0) == 12.0


def test_sample_accel_multiplier():
    rng = np.random.default_rng(0)
    values = [sample_accel_multiplier(builtin_profile(Fleet.HV), rng) for _ in range(100)]
    assert all(1.0 <= m <= 1.1 for m in values)
    assert sample_accel_multiplier(builtin_profile(Fleet.CAV), rng) == 1.1


def test_hv_pursuit_settles_in_following_band():
    hv = builtin_profile(Fleet.HV)
    dt, lead_speed = 0.1, 13.4
    abx = hv.cc0 + hv.cc1 * lead_speed
    sdx = abx + hv.cc2
    gap, speed, accel = 200.0, lead_speed, 0.0
    gaps = []
    for _ in range(10000):
        leader = LeaderView(net_gap=gap, leader_speed=lead_speed, leader_accel=0.0)
        accel = compute_acceleration(vehicle(speed, accel=accel), [leader], hv, 15.6, False, dt=dt)
        next_speed = max(speed + accel * dt, 0.0)
        gap += lead_speed * dt - 0.5 * (speed + next_speed) * dt
        speed = next_speed
        gaps.append(gap)
    settled = np.array(gaps[5000:])
    assert settled.min() >= abx - 0.05
    assert settled.max() <= sdx + 0.05
    assert abs(speed - lead_speed) < 1.1


def test_green_start_lets_connected_vehicles_pull_away():
    leader = [LeaderView(net_gap=2.0, leader_speed=1.2, leader_accel=2.0)]
    cv, hv = builtin_profile(Fleet.CV), builtin_profile(Fleet.HV)

    waiting = compute_acceleration(vehicle(0.0, Fleet.CV), leader, cv, 15.6, True)
    starting = compute_acceleration(vehicle(0.0, Fleet.CV), leader, cv, 15.6, True, green_start=True)
    assert waiting == pytest.approx(1.2**2 / 1.5)
    assert starting == pytest.approx(max_acceleration(0.0, cv.cc8, cv.cc9))

    # human drivers get no signal information
    hv_waiting = compute_acceleration(vehicle(0.0), leader, hv, 15.6, True)
    assert hv_waiting == pytest.approx(1.2**2 / 3.5)
    assert compute_acceleration(vehicle(0.0), leader, hv, 15.6, True, green_start=True) == pytest.approx(hv_waiting)
    # outside the zone the start-up behavior is off
    assert compute_acceleration(vehicle(0.0, Fleet.CV), leader, cv, 15.6, False, green_start=True) == pytest.approx(
        waiting
    )


def test_spat_startup_profiles():
    profiles = builtin_profiles()
    assert profiles[Fleet.CV].spat_startup and profiles[Fleet.CAV].spat_startup
    assert not profiles[Fleet.HV].spat_startup and not profiles[Fleet.AV].spat_startup
    with pytest.raises(ConfigurationError, match="spat_startup_factor"):
        profiles[Fleet.CV].with_overrides(spat_startup_factor=0.0)
