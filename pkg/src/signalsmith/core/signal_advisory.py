"""Fixed-time signal control, SPaT green windows, amber decisions and speed advisory."""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from signalsmith.core.contracts import AmberMode, Decision, Fleet, Indication
from signalsmith.core.driver_model import B_EMAX, DriverProfile, builtin_profile
from signalsmith.core.errors import ConfigurationError

D_COMFORT = 3.5  # m/s^2
CRAWL_FLOOR = 2.2352  # m/s, 5 mph
WINDOW_EPS = 0.1  # s
_TILE_TOL = 1e-9

INDICATION_CODES: dict[Indication, int] = {Indication.GREEN: 0, Indication.AMBER: 1, Indication.RED: 2}
DECISION_NONE, DECISION_PROCEED, DECISION_STOP = -1, 0, 1


@dataclass(frozen=True)
class Phase:
    """One phase of a fixed-time plan: the groups it serves and its intervals."""

    groups: tuple[str, ...]
    green_start: float
    green_end: float
    amber: float = 3.0
    all_red: float = 1.0

    @property
    def green(self) -> float:
        return self.green_end - self.green_start

    @property
    def end(self) -> float:
        """End of the phase including amber and all-red."""
        return self.green_end + self.amber + self.all_red


@dataclass(frozen=True)
class SignalPlan:
    """Fixed-time plan; validated against the tiling invariant on construction."""

    cycle_length: float
    phases: tuple[Phase, ...]
    offset: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "phases", tuple(self.phases))
        if self.cycle_length <= 0:
            raise ConfigurationError("plan.cycle_length must be > 0", field="plan.cycle_length")
        seen: dict[str, int] = {}
        for index, phase in enumerate(self.phases):
            if not phase.groups:
                raise ConfigurationError(f"plan phase {index} serves no movement group", field="plan.phases")
            if phase.green <= 0 or phase.amber < 0 or phase.all_red < 0:
                raise ConfigurationError(
                    f"plan phase {index} needs green > 0 and nonnegative amber/all-red", field="plan.phases"
                )
            if phase.green_start < 0 or phase.end > self.cycle_length + _TILE_TOL:
                raise ConfigurationError(
                    f"plan phase {index} ends at {phase.end:g} s beyond cycle_length {self.cycle_length:g} s",
                    field="plan.phases",
                )
            for group in phase.groups:
                if group in seen:
                    raise ConfigurationError(
                        f"movement group {group} receives more than one green per cycle", field="plan.phases"
                    )
                seen[group] = index
        ordered = sorted(self.phases, key=lambda p: p.green_start)
        for earlier, later in zip(ordered, ordered[1:]):
            if later.green_start < earlier.end - _TILE_TOL:
                raise ConfigurationError(
                    f"phases serving {','.join(earlier.groups)} and {','.join(later.groups)} overlap",
                    field="plan.phases",
                )
        object.__setattr__(self, "_group_phase", {g: self.phases[i] for g, i in seen.items()})

    @classmethod
    def sequential(
        cls,
        phases: Iterable[tuple[Sequence[str], float]],
        amber: float = 3.0,
        all_red: float = 1.0,
        offset: float = 0.0,
        cycle_length: Optional[float] = None,
    ) -> SignalPlan:
        """Lay phases end to end; the cycle defaults to their total length."""
        built = []
        start = 0.0
        for groups, green in phases:
            built.append(Phase(tuple(groups), start, start + green, amber, all_red))
            start += green + amber + all_red
        return cls(cycle_length=cycle_length if cycle_length is not None else start, phases=tuple(built), offset=offset)

    @property
    def groups(self) -> tuple[str, ...]:
        return tuple(self._group_phase)

    def phase_of(self, movement_group: str) -> Phase:
        try:
            return self._group_phase[movement_group]
        except KeyError as e:
            raise ConfigurationError(f"Unknown movement group: {movement_group}", field="plan") from e

    def green_duration(self, movement_group: str) -> float:
        return self.phase_of(movement_group).green

    def _phase_time(self, movement_group: str, t: float) -> tuple[Phase, float]:
        """Seconds since the group's green started, in [0, cycle_length)."""
        phase = self.phase_of(movement_group)
        return phase, (t - self.offset - phase.green_start) % self.cycle_length


def indication(plan: SignalPlan, movement_group: str, t: float) -> Indication:
    """Indication shown to a movement group at time t (periodic in the cycle)."""
    phase, since_green = plan._phase_time(movement_group, t)
    if since_green < phase.green:
        return Indication.GREEN
    if since_green < phase.green + phase.amber:
        return Indication.AMBER
    return Indication.RED


@dataclass(frozen=True)
class GreenWindow:
    """Time until the targeted green starts and ends, relative to now."""

    starts_in: float
    ends_in: float
    cycle_length: Optional[float] = None
    green_duration: Optional[float] = None

    def following(self) -> Optional[GreenWindow]:
        """The same movement's green one cycle later, if the cycle is known."""
        if self.cycle_length is None or self.green_duration is None:
            return None
        start = self.starts_in if self.starts_in > 0 else self.ends_in - self.green_duration
        return GreenWindow(
            starts_in=start + self.cycle_length,
            ends_in=start + self.cycle_length + self.green_duration,
            cycle_length=self.cycle_length,
            green_duration=self.green_duration,
        )


def next_green_window(plan: SignalPlan, movement_group: str, t: float) -> GreenWindow:
    """Current green (starts_in = 0) or the next one, wrapping across cycles."""
    phase, since_green = plan._phase_time(movement_group, t)
    if since_green < phase.green:
        starts_in = 0.0
        ends_in = phase.green - since_green
    else:
        starts_in = plan.cycle_length - since_green
        ends_in = starts_in + phase.green
    return GreenWindow(starts_in, ends_in, plan.cycle_length, phase.green)


def _target_speed(dist, starts_in, ends_in, v_desired, crawl_floor):
    with np.errstate(divide="ignore", invalid="ignore"):
        v_min = dist / ends_in
        v_max = dist / np.maximum(starts_in, WINDOW_EPS)
    reachable = v_min <= v_desired
    return reachable, np.minimum(v_desired, np.maximum(v_max, crawl_floor))


def advisory_speeds(
    dist_to_bar: np.ndarray,
    starts_in: np.ndarray,
    ends_in: np.ndarray,
    cycle_length: np.ndarray,
    green_duration: np.ndarray,
    v_desired: np.ndarray,
    crawl_floor: float = CRAWL_FLOOR,
) -> np.ndarray:
    """Vectorized advisory rule; see ``advisory_speed``."""
    dist = np.asarray(dist_to_bar, dtype=float)
    starts_in = np.asarray(starts_in, dtype=float)
    ends_in = np.asarray(ends_in, dtype=float)
    v_desired = np.asarray(v_desired, dtype=float)

    with np.errstate(divide="ignore", invalid="ignore"):
        natural_arrival = dist / v_desired
    green_arrival = (starts_in <= 0) & (natural_arrival <= ends_in)

    reachable, advised = _target_speed(dist, starts_in, ends_in, v_desired, crawl_floor)

    next_start = np.where(starts_in > 0, starts_in, ends_in - green_duration) + cycle_length
    next_reachable, next_advised = _target_speed(
        dist, next_start, next_start + green_duration, v_desired, crawl_floor
    )
    fallback = np.where(next_reachable, next_advised, v_desired)
    return np.where(green_arrival, v_desired, np.where(reachable, advised, fallback))


def advisory_speed(
    dist_to_bar: float, window: GreenWindow, v_desired: float, crawl_floor: float = CRAWL_FLOOR
) -> float:
    """Speed that makes a vehicle arrive at the bar inside a green window.

    Travel at ``v_desired`` when that already arrives in green; otherwise slow
    to the speed arriving at green start, never below ``crawl_floor``. If the
    window cannot be caught even at ``v_desired`` the following cycle's
    window is tried, and failing that ``v_desired`` is returned (the vehicle
    will stop at the bar).
    """
    if dist_to_bar / v_desired <= window.ends_in and window.starts_in <= 0:
        return float(v_desired)
    reachable, advised = _target_speed(dist_to_bar, window.starts_in, window.ends_in, v_desired, crawl_floor)
    if reachable:
        return float(advised)
    following = window.following()
    if following is not None:
        reachable, advised = _target_speed(
            dist_to_bar, following.starts_in, following.ends_in, v_desired, crawl_floor
        )
        if reachable:
            return float(advised)
    return float(v_desired)


def required_deceleration(v: Union[float, np.ndarray], dist_to_bar: Union[float, np.ndarray]):
    """Constant deceleration needed to stop exactly at the bar."""
    return np.asarray(v, dtype=float) ** 2 / (2.0 * np.maximum(dist_to_bar, 1e-6))


def _comfort_rule(d_req: float) -> Decision:
    return Decision.PROCEED if d_req > D_COMFORT else Decision.STOP


def _cautious_rule(d_req: float) -> Decision:
    return Decision.STOP if d_req <= B_EMAX else Decision.PROCEED


AMBER_RULES: Mapping[Fleet, Callable[[float], Decision]] = {
    Fleet.HV: _comfort_rule,
    Fleet.CV: _comfort_rule,
    Fleet.AV: _cautious_rule,
    Fleet.CAV: _cautious_rule,
}


def stop_go_decision(
    fleet: Union[Fleet, str],
    indication: Indication,
    dist_to_bar: float,
    v: float,
    latch: Optional[Decision] = None,
    profile: Optional[DriverProfile] = None,
) -> Decision:
    """Stop/go choice at the bar.

    ``latch`` is the decision carried from earlier steps of the same amber
    (and into the red that follows it): OneDecision drivers keep it for the
    whole amber, and a vehicle that committed to Proceed may finish crossing
    on red.
    """
    fleet = Fleet(fleet)
    indication = Indication(indication)
    if indication is Indication.GREEN:
        return Decision.PROCEED
    if indication is Indication.RED:
        return Decision.PROCEED if latch is Decision.PROCEED else Decision.STOP
    profile = profile or builtin_profile(fleet)
    if profile.amber_mode is AmberMode.ONE_DECISION and latch is not None:
        return latch
    return AMBER_RULES[fleet](float(required_deceleration(v, dist_to_bar)))


def stop_go_decisions(
    fleet_codes: np.ndarray,
    indication_codes: np.ndarray,
    dist_to_bar: np.ndarray,
    v: np.ndarray,
    latch: np.ndarray,
    one_decision: np.ndarray,
) -> np.ndarray:
    """Vectorized ``stop_go_decision`` over int-coded fleets, indications and latches.

    Returns decision codes (DECISION_PROCEED / DECISION_STOP).
    """
    d_req = required_deceleration(v, dist_to_bar)
    cautious = (fleet_codes == Fleet.AV.code) | (fleet_codes == Fleet.CAV.code)
    threshold = np.where(cautious, B_EMAX, D_COMFORT)
    amber = np.where(d_req > threshold, DECISION_PROCEED, DECISION_STOP)
    amber = np.where(one_decision & (latch != DECISION_NONE), latch, amber)
    red = np.where(latch == DECISION_PROCEED, DECISION_PROCEED, DECISION_STOP)
    green_code, amber_code = INDICATION_CODES[Indication.GREEN], INDICATION_CODES[Indication.AMBER]
    return np.select(
        [indication_codes == green_code, indication_codes == amber_code], [DECISION_PROCEED, amber], default=red
    )


class SignalState:
    """Per-group lookup tables for evaluating the plan over many groups at once."""

    def __init__(self, plan: SignalPlan, groups: Sequence[str]):
        self.plan = plan
        self.groups = tuple(groups)
        phases = [plan.phase_of(g) for g in self.groups]
        self.green_start = np.array([p.green_start for p in phases])
        self.green = np.array([p.green for p in phases])
        self.amber = np.array([p.amber for p in phases])

    def since_green(self, t: float) -> np.ndarray:
        return (t - self.plan.offset - self.green_start) % self.plan.cycle_length

    def indication_codes(self, t: float) -> np.ndarray:
        since = self.since_green(t)
        return np.select(
            [since < self.green, since < self.green + self.amber],
            [INDICATION_CODES[Indication.GREEN], INDICATION_CODES[Indication.AMBER]],
            default=INDICATION_CODES[Indication.RED],
        )

    def windows(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """(starts_in, ends_in) per group, matching ``next_green_window``."""
        since = self.since_green(t)
        in_green = since < self.green
        starts_in = np.where(in_green, 0.0, self.plan.cycle_length - since)
        ends_in = np.where(in_green, self.green - since, starts_in + self.green)
        return starts_in, ends_in


def cycle_index(plan: SignalPlan, t: float) -> int:
    return int(math.floor((t - plan.offset) / plan.cycle_length))
