"""Scenario definition: fleet mix, demand, turning, lane geometry and signal plan."""

from __future__ import annotations

import dataclasses
import hashlib
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Any, Optional

from signalsmith.core.contracts import (
    APPROACH_ORDER,
    FLEET_ORDER,
    MOVEMENT_ORDER,
    Approach,
    Fleet,
    LaneType,
    Movement,
)
from signalsmith.core.driver_model import V_BASE_DEFAULT, DriverProfile, builtin_profiles
from signalsmith.core.errors import ConfigurationError
from signalsmith.core.signal_advisory import SignalPlan

VEHICLE_LENGTH = 4.5  # m
LINK_LENGTH = 600.0  # m
DOWNSTREAM_LENGTH = 100.0  # m
SHARE_TOL = 1e-9

_LANE_TYPES: dict[frozenset, LaneType] = {
    frozenset({Movement.LEFT}): LaneType.EXCLUSIVE_LEFT,
    frozenset({Movement.THROUGH}): LaneType.EXCLUSIVE_THROUGH,
    frozenset({Movement.RIGHT}): LaneType.EXCLUSIVE_RIGHT,
    frozenset({Movement.THROUGH, Movement.RIGHT}): LaneType.SHARED_THROUGH_RIGHT,
}


@dataclass(frozen=True)
class LaneSpec:
    """One approach lane: the lane group it belongs to and the movements it permits."""

    lane_group: str
    movements: tuple[Movement, ...]

    def __post_init__(self):
        object.__setattr__(self, "movements", tuple(Movement(m) for m in self.movements))

    @property
    def lane_type(self) -> LaneType:
        try:
            return _LANE_TYPES[frozenset(self.movements)]
        except KeyError as e:
            allowed = ", ".join(m.value for m in self.movements)
            raise ConfigurationError(
                f"Lane group {self.lane_group}: unsupported movement set ({allowed})", field="geometry"
            ) from e


@dataclass(frozen=True)
class Lane:
    """A lane resolved to its network-wide index."""

    lane_id: int
    approach: Approach
    lane_group: str
    lane_type: LaneType
    movements: tuple[Movement, ...]


@dataclass(frozen=True)
class LaneGroup:
    """Lanes of one approach serving the same movement set."""

    group_id: str
    approach: Approach
    lane_type: LaneType
    lane_ids: tuple[int, ...]


def _canonical_shares(shares: Mapping[Any, float]) -> dict[Fleet, float]:
    try:
        resolved = {Fleet.parse(k): float(v) for k, v in shares.items()}
    except ValueError as e:
        raise ConfigurationError(f"shares: {e}", field="shares") from e
    return {fleet: resolved.get(fleet, 0.0) for fleet in FLEET_ORDER}


@dataclass(frozen=True)
class Scenario:
    """Everything one replication needs, apart from the seed-derived random stream."""

    shares: Mapping[Fleet, float]
    demands: Mapping[Approach, float]
    turning: Mapping[Approach, Mapping[Movement, float]]
    geometry: Mapping[Approach, tuple[LaneSpec, ...]]
    plan: SignalPlan
    duration: float = 3600.0
    warmup: float = 600.0
    seed: int = 42
    dt: float = 0.1
    link_length: float = LINK_LENGTH
    downstream_length: float = DOWNSTREAM_LENGTH
    v_base: float = V_BASE_DEFAULT
    profiles: Mapping[Fleet, DriverProfile] = field(default_factory=builtin_profiles)
    scenario_id: str = "base"

    def __post_init__(self):
        shares = _canonical_shares(self.shares)
        if any(v < 0 for v in shares.values()):
            raise ConfigurationError("shares must be nonnegative", field="shares")
        if abs(sum(shares.values()) - 1.0) > SHARE_TOL:
            raise ConfigurationError(
                f"shares must sum to 1 (got {sum(shares.values()):.6g})", field="shares"
            )
        object.__setattr__(self, "shares", shares)

        demands = {Approach(a): float(v) for a, v in self.demands.items()}
        if any(v < 0 for v in demands.values()):
            raise ConfigurationError("demands must be nonnegative", field="demands")
        object.__setattr__(self, "demands", {a: demands.get(a, 0.0) for a in APPROACH_ORDER})

        turning = {}
        for approach, split in self.turning.items():
            split = {Movement(m): float(p) for m, p in split.items()}
            if any(p < 0 for p in split.values()) or abs(sum(split.values()) - 100.0) > 1e-6:
                raise ConfigurationError(
                    f"turning percentages for {Approach(approach).value} must be nonnegative and sum to 100",
                    field="turning",
                )
            turning[Approach(approach)] = {m: split.get(m, 0.0) for m in MOVEMENT_ORDER}
        object.__setattr__(self, "turning", turning)

        geometry = {Approach(a): tuple(lanes) for a, lanes in self.geometry.items()}
        object.__setattr__(self, "geometry", geometry)
        object.__setattr__(self, "profiles", {**builtin_profiles(), **dict(self.profiles)})

        if self.dt <= 0:
            raise ConfigurationError("dt must be > 0", field="dt")
        if not self.duration > self.warmup >= 0:
            raise ConfigurationError("duration must exceed warmup and warmup must be >= 0", field="duration")
        if self.link_length <= 0 or self.downstream_length < 0:
            raise ConfigurationError("link_length must be > 0 and downstream_length >= 0", field="link_length")
        if self.v_base <= 0:
            raise ConfigurationError("v_base must be > 0", field="v_base")
        self._check_geometry()

    def _check_geometry(self) -> None:
        for approach in APPROACH_ORDER:
            if self.demands[approach] == 0:
                continue
            lanes = self.geometry.get(approach, ())
            if not lanes:
                raise ConfigurationError(f"{approach.value} has demand but no lanes", field="geometry")
            split = self.turning.get(approach)
            if split is None:
                raise ConfigurationError(f"{approach.value} has demand but no turning split", field="turning")
            for movement, pct in split.items():
                if pct > 0 and not any(movement in lane.movements for lane in lanes):
                    raise ConfigurationError(
                        f"{approach.value} {movement.value} has {pct:g}% of demand but no lane permits it",
                        field="geometry",
                    )
        for group in self.lane_groups():
            group_type = {lane.lane_type for lane in self.lanes() if lane.lane_group == group.group_id}
            if len(group_type) > 1:
                raise ConfigurationError(f"Lane group {group.group_id} mixes lane types", field="geometry")
            self.plan.phase_of(group.group_id)

    def lanes(self) -> list[Lane]:
        """All lanes in approach order; the position in the list is the lane id."""
        lanes = []
        for approach in APPROACH_ORDER:
            for spec in self.geometry.get(approach, ()):
                lanes.append(Lane(len(lanes), approach, spec.lane_group, spec.lane_type, spec.movements))
        return lanes

    def lane_groups(self) -> list[LaneGroup]:
        groups: dict[str, LaneGroup] = {}
        for lane in self.lanes():
            existing = groups.get(lane.lane_group)
            lane_ids = (existing.lane_ids if existing else ()) + (lane.lane_id,)
            if existing and existing.approach is not lane.approach:
                raise ConfigurationError(f"Lane group {lane.lane_group} spans approaches", field="geometry")
            groups[lane.lane_group] = LaneGroup(lane.lane_group, lane.approach, lane.lane_type, lane_ids)
        return list(groups.values())

    def right_turn_percent(self, approach: Approach) -> float:
        return self.turning.get(approach, {}).get(Movement.RIGHT, 0.0)

    def with_shares(self, shares: Mapping[Any, float], scenario_id: Optional[str] = None) -> Scenario:
        return dataclasses.replace(self, shares=shares, scenario_id=scenario_id or self.scenario_id)

    def with_seed(self, seed: int) -> Scenario:
        return dataclasses.replace(self, seed=int(seed))

    def with_profiles(self, profiles: Mapping[Fleet, DriverProfile]) -> Scenario:
        return dataclasses.replace(self, profiles={**dict(self.profiles), **dict(profiles)})


def stream_seed(scenario_id: str, seed: int) -> int:
    """Derive the run's random-stream seed from (scenario_id, seed)."""
    digest = hashlib.sha256(f"{scenario_id}:{seed}".encode()).hexdigest()
    return int(digest[:16], 16)


def default_plan() -> SignalPlan:
    """Fixed-time plan of the default testbed: four phases, 3 s amber and 1 s all-red each."""
    return SignalPlan.sequential(
        [
            (("EB_L", "WB_L"), 15.0),
            (("EB_T", "EB_R", "WB_TR"), 40.0),
            (("NB_L", "SB_L"), 15.0),
            (("NB_TR", "SB_TR"), 34.0),
        ],
        amber=3.0,
        all_red=1.0,
    )


def _left_plus_shared(prefix: str) -> tuple[LaneSpec, ...]:
    shared = LaneSpec(f"{prefix}_TR", (Movement.THROUGH, Movement.RIGHT))
    return (LaneSpec(f"{prefix}_L", (Movement.LEFT,)), shared, shared)


def default_testbed() -> Scenario:
    """The single-intersection testbed with a 100% HV fleet."""
    return Scenario(
        shares={Fleet.HV: 1.0, Fleet.CV: 0.0, Fleet.AV: 0.0, Fleet.CAV: 0.0},
        demands={Approach.EB: 900.0, Approach.WB: 1200.0, Approach.NB: 1200.0, Approach.SB: 1200.0},
        turning={
            Approach.EB: {Movement.LEFT: 15.0, Movement.THROUGH: 70.0, Movement.RIGHT: 15.0},
            Approach.NB: {Movement.LEFT: 15.0, Movement.THROUGH: 80.0, Movement.RIGHT: 5.0},
            Approach.WB: {Movement.LEFT: 15.0, Movement.THROUGH: 70.0, Movement.RIGHT: 15.0},
            Approach.SB: {Movement.LEFT: 15.0, Movement.THROUGH: 60.0, Movement.RIGHT: 25.0},
        },
        geometry={
            Approach.EB: (
                LaneSpec("EB_L", (Movement.LEFT,)),
                LaneSpec("EB_T", (Movement.THROUGH,)),
                LaneSpec("EB_T", (Movement.THROUGH,)),
                LaneSpec("EB_R", (Movement.RIGHT,)),
            ),
            Approach.WB: _left_plus_shared("WB"),
            Approach.NB: _left_plus_shared("NB"),
            Approach.SB: _left_plus_shared("SB"),
        },
        plan=default_plan(),
        duration=3600.0,
        warmup=600.0,
        seed=42,
        dt=0.1,
    )
