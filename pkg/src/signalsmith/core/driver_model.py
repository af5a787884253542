"""Wiedemann-99 car-following with fleet-specific driver profiles.

The regime logic is written once over numpy arrays so the engine can evaluate
every vehicle of a step in a single pass; the scalar operations
(``compute_acceleration``, ``enforce_absolute_braking``) wrap the same code.
"""

from __future__ import annotations

import dataclasses
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Optional, Union

import numpy as np

from signalsmith.core.contracts import FLEET_ORDER, AmberMode, Fleet
from signalsmith.core.errors import ConfigurationError, StateCorruptionError

if TYPE_CHECKING:
    from signalsmith.core.sim_engine import VehicleState

ArrayLike = Union[float, np.ndarray]

B_EMAX = 6.0  # m/s^2, emergency deceleration for all fleets
V_50MPH = 22.35  # m/s
V_BASE_DEFAULT = 15.6  # m/s
DEFAULT_DT = 0.1  # s
STOPPED_SPEED = 1.0  # m/s, below this a vehicle counts as queued
STOP_BAR_STANDSTILL = 0.25  # m, rest gap to a stop-bar virtual leader
RELAX_DECEL = 2.0  # m/s^2, free-driving deceleration toward a lower desired speed
GUARD_MIN_GAP = 0.3  # m, collision guard margin behind a vehicle
GUARD_MIN_GAP_BAR = 0.05  # m, collision guard margin behind the stop bar
CC6_SCALE = 1.0e-4
NO_LEADER_GAP = 1.0e4  # m, stands in for "no leader"


@dataclass(frozen=True)
class DriverProfile:
    """Per-fleet Wiedemann-99 parameters plus signal and interaction attributes."""

    fleet: Fleet
    cc0: float
    cc1: float
    cc2: float
    cc3: float
    cc4: float
    cc5: float
    cc6: float
    cc7: float
    cc8: float
    cc9: float
    amber_mode: AmberMode = AmberMode.CONTINUOUS_CHECK
    red_amber_go: bool = True
    reduced_safety_factor: float = 1.0
    reduced_safety_zone_upstream: float = 100.0
    reduced_safety_zone_downstream: float = 100.0
    eabd_enabled: bool = False
    implicit_stochasticity: bool = True
    interaction_vehicle_count: int = 1
    desired_accel_multiplier_range: tuple[float, float] = field(default=(1.0, 1.0))
    spat_startup: bool = False
    spat_startup_factor: float = 1.0

    def __post_init__(self):
        fleet = Fleet(self.fleet)
        object.__setattr__(self, "fleet", fleet)
        object.__setattr__(self, "amber_mode", AmberMode(self.amber_mode))
        object.__setattr__(
            self, "desired_accel_multiplier_range", tuple(float(x) for x in self.desired_accel_multiplier_range)
        )
        checks = [
            (self.cc0 > 0, "cc0 must be > 0"),
            (self.cc1 > 0, "cc1 must be > 0"),
            (self.cc2 >= 0, "cc2 must be >= 0"),
            (self.cc7 >= 0, "cc7 must be >= 0"),
            (self.cc8 > 0, "cc8 must be > 0"),
            (self.cc9 > 0, "cc9 must be > 0"),
            (self.cc4 <= 0 <= self.cc5, "cc4 <= 0 <= cc5 required"),
            (0 < self.reduced_safety_factor <= 1, "reduced_safety_factor must be in (0, 1]"),
            (self.reduced_safety_zone_upstream >= 0, "reduced_safety_zone_upstream must be >= 0"),
            (self.reduced_safety_zone_downstream >= 0, "reduced_safety_zone_downstream must be >= 0"),
            (0 < self.spat_startup_factor <= 1, "spat_startup_factor must be in (0, 1]"),
            (self.interaction_vehicle_count >= 1, "interaction_vehicle_count must be >= 1"),
            (
                self.interaction_vehicle_count == 1 or fleet is Fleet.CAV,
                "interaction_vehicle_count > 1 is only allowed for CAV",
            ),
            (len(self.desired_accel_multiplier_range) == 2, "desired_accel_multiplier_range needs [low, high]"),
        ]
        failed = [message for ok, message in checks if not ok]
        if failed:
            raise ConfigurationError(f"Invalid {fleet.value} profile: {'; '.join(failed)}")
        low, high = self.desired_accel_multiplier_range
        if not 0 < low <= high:
            raise ConfigurationError(
                f"Invalid {fleet.value} profile: desired_accel_multiplier_range must satisfy 0 < low <= high"
            )

    @property
    def cc(self) -> tuple[float, ...]:
        """The ten calibration components cc0..cc9."""
        return (self.cc0, self.cc1, self.cc2, self.cc3, self.cc4, self.cc5, self.cc6, self.cc7, self.cc8, self.cc9)

    def with_overrides(self, **overrides: Any) -> DriverProfile:
        """Return a copy with the given fields replaced (validated again)."""
        unknown = set(overrides) - {f.name for f in dataclasses.fields(self)}
        if unknown:
            raise ConfigurationError(f"Unknown profile field(s): {', '.join(sorted(unknown))}")
        return dataclasses.replace(self, **overrides)


_BUILTIN_PROFILES: dict[Fleet, DriverProfile] = {
    Fleet.HV: DriverProfile(
        fleet=Fleet.HV,
        cc0=1.5, cc1=1.6, cc2=4.0, cc3=-8.0, cc4=-0.35, cc5=0.35, cc6=11.44, cc7=0.25, cc8=3.5, cc9=1.5,
        amber_mode=AmberMode.CONTINUOUS_CHECK,
        red_amber_go=True,
        reduced_safety_factor=0.6,
        eabd_enabled=False,
        implicit_stochasticity=True,
        interaction_vehicle_count=1,
        desired_accel_multiplier_range=(1.00, 1.10),
    ),
    Fleet.CV: DriverProfile(
        fleet=Fleet.CV,
        cc0=1.5, cc1=1.6, cc2=2.0, cc3=-8.0, cc4=-0.35, cc5=0.35, cc6=11.44, cc7=0.25, cc8=3.5, cc9=1.5,
        amber_mode=AmberMode.CONTINUOUS_CHECK,
        red_amber_go=True,
        reduced_safety_factor=0.6,
        eabd_enabled=False,
        implicit_stochasticity=True,
        interaction_vehicle_count=1,
        desired_accel_multiplier_range=(1.00, 1.00),
        spat_startup=True,
        spat_startup_factor=0.6,
    ),
    Fleet.AV: DriverProfile(
        fleet=Fleet.AV,
        cc0=1.5, cc1=2.2, cc2=0.0, cc3=-10.0, cc4=-0.1, cc5=0.1, cc6=0.0, cc7=0.1, cc8=2.0, cc9=1.2,
        amber_mode=AmberMode.CONTINUOUS_CHECK,
        red_amber_go=False,
        reduced_safety_factor=1.0,
        eabd_enabled=True,
        implicit_stochasticity=False,
        interaction_vehicle_count=1,
        desired_accel_multiplier_range=(1.00, 1.00),
    ),
    Fleet.CAV: DriverProfile(
        fleet=Fleet.CAV,
        cc0=1.0, cc1=1.0, cc2=0.0, cc3=-6.0, cc4=-0.1, cc5=0.1, cc6=0.0, cc7=0.1, cc8=4.0, cc9=2.0,
        amber_mode=AmberMode.ONE_DECISION,
        red_amber_go=False,
        reduced_safety_factor=1.0,
        eabd_enabled=False,
        implicit_stochasticity=False,
        interaction_vehicle_count=2,
        desired_accel_multiplier_range=(1.10, 1.10),
        spat_startup=True,
        spat_startup_factor=0.75,
    ),
}


def builtin_profile(fleet: Union[Fleet, str]) -> DriverProfile:
    """Return the built-in driving behavior for a fleet type."""
    return _BUILTIN_PROFILES[Fleet(fleet)]


def builtin_profiles() -> dict[Fleet, DriverProfile]:
    """Return a fresh mapping of all four built-in profiles."""
    return dict(_BUILTIN_PROFILES)


def apply_profile_overrides(
    profiles: Mapping[Fleet, DriverProfile], overrides: Mapping[str, Mapping[str, Any]]
) -> dict[Fleet, DriverProfile]:
    """Apply a ``{fleet: {field: value}}`` override mapping to a profile set."""
    result = dict(profiles)
    for fleet_name, fields in overrides.items():
        try:
            fleet = Fleet.parse(fleet_name)
        except ValueError as e:
            raise ConfigurationError(f"Unknown fleet in profile overrides: {fleet_name}", field=str(fleet_name)) from e
        result[fleet] = result[fleet].with_overrides(**dict(fields))
    return result


@dataclass(frozen=True)
class LeaderView:
    """What a follower perceives of one leader (a vehicle or a stop bar)."""

    net_gap: float
    leader_speed: float
    leader_accel: float
    is_signal_stop_bar: bool = False

    @classmethod
    def stop_bar(cls, dist_to_bar: float) -> LeaderView:
        """Virtual standing leader at the stop bar."""
        return cls(net_gap=dist_to_bar, leader_speed=0.0, leader_accel=0.0, is_signal_stop_bar=True)


@dataclass(frozen=True)
class ProfileArrays:
    """Profile parameters gathered per vehicle (one array entry per vehicle)."""

    cc0: np.ndarray
    cc1: np.ndarray
    cc2: np.ndarray
    cc3: np.ndarray
    cc4: np.ndarray
    cc5: np.ndarray
    cc6: np.ndarray
    cc7: np.ndarray
    cc8: np.ndarray
    cc9: np.ndarray
    reduced_safety_factor: np.ndarray
    zone_upstream: np.ndarray
    zone_downstream: np.ndarray
    eabd: np.ndarray
    one_decision: np.ndarray
    interaction_count: np.ndarray
    spat_startup: np.ndarray
    startup_factor: np.ndarray


_NUMERIC_FIELDS = ("cc0", "cc1", "cc2", "cc3", "cc4", "cc5", "cc6", "cc7", "cc8", "cc9")


class ProfileTable:
    """Fleet-indexed parameter table; ``take`` expands it per vehicle."""

    def __init__(self, profiles: Mapping[Fleet, DriverProfile]):
        self.profiles = {fleet: profiles.get(fleet, builtin_profile(fleet)) for fleet in FLEET_ORDER}
        ordered = [self.profiles[f] for f in FLEET_ORDER]
        self._columns: dict[str, np.ndarray] = {
            name: np.array([getattr(p, name) for p in ordered], dtype=float) for name in _NUMERIC_FIELDS
        }
        self._columns["reduced_safety_factor"] = np.array([p.reduced_safety_factor for p in ordered])
        self._columns["zone_upstream"] = np.array([p.reduced_safety_zone_upstream for p in ordered])
        self._columns["zone_downstream"] = np.array([p.reduced_safety_zone_downstream for p in ordered])
        self._columns["eabd"] = np.array([p.eabd_enabled for p in ordered], dtype=bool)
        self._columns["one_decision"] = np.array(
            [p.amber_mode is AmberMode.ONE_DECISION for p in ordered], dtype=bool
        )
        self._columns["interaction_count"] = np.array([p.interaction_vehicle_count for p in ordered], dtype=int)
        self._columns["spat_startup"] = np.array([p.spat_startup for p in ordered], dtype=bool)
        self._columns["startup_factor"] = np.array([p.spat_startup_factor for p in ordered])

    @property
    def max_interaction_count(self) -> int:
        return int(self._columns["interaction_count"].max())

    def take(self, fleet_codes: np.ndarray) -> ProfileArrays:
        """Gather parameters for an array of fleet codes."""
        codes = np.asarray(fleet_codes, dtype=int)
        return ProfileArrays(**{name: column[codes] for name, column in self._columns.items()})


def _single_profile_arrays(profile: DriverProfile) -> ProfileArrays:
    return ProfileTable({profile.fleet: profile}).take(np.array([profile.fleet.code]))


def max_acceleration(v: ArrayLike, cc8: ArrayLike, cc9: ArrayLike) -> ArrayLike:
    """Speed-interpolated acceleration limit: cc8 at standstill, cc9 at 50 mph and above."""
    share = np.minimum(np.asarray(v, dtype=float), V_50MPH) / V_50MPH
    return cc8 + (cc9 - cc8) * share


def collision_guard(
    accel: ArrayLike,
    v: ArrayLike,
    net_gap: ArrayLike,
    leader_speed: ArrayLike,
    min_gap: ArrayLike,
    dt: float = DEFAULT_DT,
    b_emax: float = B_EMAX,
) -> np.ndarray:
    """Cap acceleration so the follower can still stop behind a leader braking at b_emax.

    The follower is assumed to react one step later than the leader.
    """
    v = np.asarray(v, dtype=float)
    vl = np.asarray(leader_speed, dtype=float)
    vl_next = np.maximum(vl - b_emax * dt, 0.0)
    leader_travel = 0.5 * (vl + vl_next) * dt
    budget = (
        np.asarray(net_gap, dtype=float) + leader_travel - 0.5 * v * dt - min_gap + vl_next**2 / (2.0 * b_emax)
    )
    reaction = 1.5 * dt
    v_safe = b_emax * (-reaction + np.sqrt(reaction**2 + 2.0 * np.maximum(budget, 0.0) / b_emax))
    return np.minimum(np.asarray(accel, dtype=float), (v_safe - v) / dt)


def safety_factors(
    params: ProfileArrays, in_zone: ArrayLike, leader_queued: ArrayLike, green_start: ArrayLike = False
) -> np.ndarray:
    """Scale for ABX and SDX: the reduced factor behind a queue inside the zone,
    and the start-up factor for SPaT-aware vehicles behind any leader once green.
    """
    factor = np.where(np.asarray(in_zone) & np.asarray(leader_queued), params.reduced_safety_factor, 1.0)
    return np.where(green_start, np.minimum(factor, params.startup_factor), factor)


def w99_acceleration(
    v: ArrayLike,
    net_gap: ArrayLike,
    leader_speed: ArrayLike,
    leader_accel: ArrayLike,
    prev_accel: ArrayLike,
    desired_speed: ArrayLike,
    accel_multiplier: ArrayLike,
    params: ProfileArrays,
    reduced_factor: ArrayLike = 1.0,
    is_stop_bar: ArrayLike = False,
    green_start: ArrayLike = False,
    dt: float = DEFAULT_DT,
) -> np.ndarray:
    """Single-leader Wiedemann-99 acceleration, vectorized over vehicles.

    Regimes are evaluated in priority order: emergency, closing, following,
    free driving. ``reduced_factor`` scales ABX and SDX (AX stays the floor).
    Vehicles flagged ``green_start`` know the queue ahead is discharging and
    pull away at full acceleration once past ABX.
    """
    v = np.asarray(v, dtype=float)
    dx = np.asarray(net_gap, dtype=float)
    vl = np.asarray(leader_speed, dtype=float)
    al = np.asarray(leader_accel, dtype=float)
    prev = np.asarray(prev_accel, dtype=float)
    desired = np.asarray(desired_speed, dtype=float)
    bar = np.asarray(is_stop_bar, dtype=bool)
    starting = np.asarray(green_start, dtype=bool)
    p = params

    dv = vl - v
    ax = np.where(bar, STOP_BAR_STANDSTILL, p.cc0)
    abx = np.maximum(ax, reduced_factor * (ax + p.cc1 * v))
    sdx = np.maximum(abx, reduced_factor * (ax + p.cc1 * v + p.cc2))
    sdv = p.cc6 * CC6_SCALE * dx**2
    sdv_close = np.where(vl > 0, p.cc4 - sdv, 0.0)
    sdv_open = np.where(v > p.cc5, p.cc5 + sdv, sdv)
    sdxv = sdx + p.cc3 * (dv - p.cc4)
    a_max = max_acceleration(v, p.cc8, p.cc9) * accel_multiplier
    toward_desired = np.maximum(desired - v, -RELAX_DECEL)

    emergency = (dv < sdv_open) & (dx <= abx)
    closing = ~emergency & (dv < sdv_close) & (dx < sdxv)
    following = ~emergency & ~closing & (dv < sdv_open) & (dx < sdx)

    with np.errstate(divide="ignore", invalid="ignore"):
        # decelerate, increase distance
        squeeze = np.where(dx > ax, al + dv * dv / (ax - dx), al + 0.5 * (dv - sdv_open))
        a_emergency = np.where(dv < 0, np.minimum(squeeze, 0.0), 0.0)
        a_emergency = np.where(v > 0, np.minimum(a_emergency, -p.cc7), 0.0)

        # decelerate, decrease distance
        a_closing = 0.5 * dv * dv / (abx - 0.1 - dx)

        # keep distance: swing at +-cc7 inside [ABX, SDX], reversing once half of cc7
        # would be needed to stop the drift before the nearer edge
        brake_needed = np.where(dv < 0, dv * dv / (2.0 * np.maximum(dx - abx, 1e-6)), 0.0)
        lift_needed = np.where(dv > 0, dv * dv / (2.0 * np.maximum(sdx - dx, 1e-6)), 0.0)
        turn = 0.5 * p.cc7
        speeding_up = np.where(prev > 0, brake_needed < turn, (dv > 0) & (lift_needed >= turn))
        a_following = np.where(
            speeding_up, np.minimum(p.cc7, toward_desired), -np.maximum(p.cc7, brake_needed)
        )

        # accelerate toward the desired speed
        gap_limited = np.where((dx < sdx) & ~starting, np.minimum(dv * dv / (sdx - dx), a_max), a_max)
        a_free = np.where(dx > abx, gap_limited, 0.0)
        a_free = np.minimum(a_free, toward_desired)

    accel = np.select([emergency, closing, following], [a_emergency, a_closing, a_following], default=a_free)
    accel = np.where(np.isfinite(accel), accel, -B_EMAX)
    accel = collision_guard(accel, v, dx, vl, np.where(bar, GUARD_MIN_GAP_BAR, GUARD_MIN_GAP), dt=dt)
    return np.clip(accel, -B_EMAX, a_max)


def absolute_braking_limit(
    accel_candidate: ArrayLike, v: ArrayLike, net_gap: ArrayLike, b_emax: float = B_EMAX, dt: float = DEFAULT_DT
) -> np.ndarray:
    """Vectorized brick-wall constraint; see ``enforce_absolute_braking``."""
    v = np.asarray(v, dtype=float)
    gap = np.asarray(net_gap, dtype=float)
    budget = np.maximum(gap - 0.5 * v * dt, 0.0)
    half = 0.5 * dt
    v_next_max = b_emax * (-half + np.sqrt(half**2 + 2.0 * budget / b_emax))
    limited = np.minimum(np.asarray(accel_candidate, dtype=float), (v_next_max - v) / dt)
    limited = np.where(v > 0, limited, accel_candidate)
    return np.maximum(limited, -b_emax)


def enforce_absolute_braking(
    accel_candidate: float, v: float, net_gap: float, b_emax: float = B_EMAX, dt: float = DEFAULT_DT
) -> float:
    """Largest acceleration <= candidate keeping net_gap' >= v'^2 / (2 b_emax) after one step.

    The leader is treated as a wall that stops instantly; a stopped follower
    already satisfies the criterion and keeps its candidate.
    """
    return float(absolute_braking_limit(accel_candidate, v, net_gap, b_emax=b_emax, dt=dt))


def compute_acceleration(
    self: VehicleState,
    leaders: Sequence[LeaderView],
    profile: DriverProfile,
    desired_speed: float,
    in_reduced_safety_zone: bool,
    dt: float = DEFAULT_DT,
    green_start: bool = False,
) -> float:
    """Acceleration of one vehicle against up to ``interaction_vehicle_count`` leaders.

    Leaders are ordered nearest-first with cumulative net gaps. The result is
    the minimum over the single-leader accelerations, then the brick-wall
    constraint for EABD profiles.
    ``green_start`` marks a vehicle whose signal group is showing green; it
    only changes behavior for profiles with ``spat_startup``.

    Raises:
        StateCorruptionError: a leader has a negative net gap
    """
    if any(leader.net_gap < 0 for leader in leaders):
        raise StateCorruptionError(
            "Negative net gap handed to the driver model",
            {"vehicle": getattr(self, "id", None), "gaps": [round(l.net_gap, 3) for l in leaders]},
        )
    if len(leaders) > profile.interaction_vehicle_count + sum(l.is_signal_stop_bar for l in leaders):
        raise ValueError(
            f"{len(leaders)} leaders exceed interaction_vehicle_count={profile.interaction_vehicle_count}"
        )
    params = _single_profile_arrays(profile)
    views = list(leaders) or [LeaderView(NO_LEADER_GAP, self.speed, 0.0)]
    gap = np.array([view.net_gap for view in views])
    speed = np.array([view.leader_speed for view in views])
    is_bar = np.array([view.is_signal_stop_bar for view in views])
    starting = bool(green_start and profile.spat_startup and in_reduced_safety_zone) & ~is_bar
    factor = safety_factors(params, in_reduced_safety_zone, is_bar | (speed < STOPPED_SPEED), starting)
    candidates = w99_acceleration(
        v=np.full(len(views), self.speed),
        net_gap=gap,
        leader_speed=speed,
        leader_accel=np.array([view.leader_accel for view in views]),
        prev_accel=np.full(len(views), self.accel),
        desired_speed=np.full(len(views), desired_speed),
        accel_multiplier=self.accel_multiplier,
        params=params,
        reduced_factor=factor,
        is_stop_bar=is_bar,
        green_start=starting,
        dt=dt,
    )
    accel = float(candidates.min())
    if profile.eabd_enabled and leaders:
        accel = enforce_absolute_braking(accel, self.speed, float(gap.min()), dt=dt)
    return accel


def sample_desired_speed(
    fleet: Union[Fleet, str],
    rng_stream: np.random.Generator,
    v_base: float = V_BASE_DEFAULT,
    profile: Optional[DriverProfile] = None,
) -> float:
    """Desired speed: uniform on [0.95, 1.05] v_base with implicit stochasticity, else v_base."""
    profile = profile or builtin_profile(fleet)
    if profile.implicit_stochasticity:
        return float(v_base * rng_stream.uniform(0.95, 1.05))
    return float(v_base)


def sample_accel_multiplier(profile: DriverProfile, rng_stream: np.random.Generator) -> float:
    """Per-vehicle desired-acceleration multiplier from the profile's range."""
    low, high = profile.desired_accel_multiplier_range
    if low == high:
        return float(low)
    return float(rng_stream.uniform(low, high))
