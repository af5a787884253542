"""Fixed-step microscopic simulation of one signalized intersection.

The world keeps vehicles as parallel numpy arrays sorted by (lane, position)
so that leaders, signal decisions and accelerations are evaluated for every
vehicle in one vectorized pass per step. All randomness comes from a single
``numpy.random.Generator`` seeded from (scenario_id, seed).
"""

from __future__ import annotations

import logging
from collections import deque
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
import pandas as pd

from signalsmith.core.contracts import (
    APPROACH_ORDER,
    FLEET_ORDER,
    MOVEMENT_ORDER,
    Approach,
    Columns,
    Decision,
    Fleet,
    Indication,
    Movement,
)
from signalsmith.core.driver_model import (
    B_EMAX,
    NO_LEADER_GAP,
    STOPPED_SPEED,
    ProfileTable,
    absolute_braking_limit,
    safety_factors,
    sample_accel_multiplier,
    sample_desired_speed,
    w99_acceleration,
)
from signalsmith.core.errors import StateCorruptionError
from signalsmith.core.scenario import VEHICLE_LENGTH, Lane, Scenario, stream_seed
from signalsmith.core.signal_advisory import (
    CRAWL_FLOOR,
    DECISION_NONE,
    DECISION_PROCEED,
    DECISION_STOP,
    INDICATION_CODES,
    SignalState,
    advisory_speeds,
    cycle_index,
    stop_go_decisions,
)

logger = logging.getLogger(__name__)

TURN_SPEED = 8.0  # m/s
TURN_ZONE = 30.0  # m upstream of the bar
TURN_DECEL = 1.5  # m/s^2, slope of the turning speed cap
ENTRY_DECEL = 3.0  # m/s^2

_INDICATION_BY_CODE = {code: ind for ind, code in INDICATION_CODES.items()}
_DECISION_BY_CODE = {DECISION_NONE: None, DECISION_PROCEED: Decision.PROCEED, DECISION_STOP: Decision.STOP}
_CODE_BY_DECISION = {v: k for k, v in _DECISION_BY_CODE.items()}
_THROUGH = Movement.THROUGH.code
_CONNECTED = (Fleet.CV.code, Fleet.CAV.code)


@dataclass
class VehicleState:
    """Kinematic state and bookkeeping of one vehicle."""

    id: int
    fleet: Fleet
    approach: Approach
    movement: Movement
    lane_id: int
    position: float
    speed: float
    accel: float = 0.0
    length: float = VEHICLE_LENGTH
    desired_speed: float = 15.6
    accel_multiplier: float = 1.0
    entry_time: float = 0.0
    stopbar_crossing_time: Optional[float] = None
    amber_latch: Optional[Decision] = None


# name -> (dtype, fill value for missing)
_STATE_FIELDS: dict[str, tuple[type, Any]] = {
    "id": (np.int64, 0),
    "fleet": (np.int64, 0),
    "approach": (np.int64, 0),
    "movement": (np.int64, 0),
    "lane": (np.int64, 0),
    "group": (np.int64, 0),
    "x": (float, 0.0),
    "v": (float, 0.0),
    "a": (float, 0.0),
    "desired": (float, 0.0),
    "mult": (float, 1.0),
    "entry_time": (float, 0.0),
    "insert_time": (float, np.nan),
    "crossing_time": (float, np.nan),
    "crossing_indication": (np.int64, -1),
    "latch": (np.int64, DECISION_NONE),
    "stops": (np.int64, 0),
}


def _pick(u: float, weights: np.ndarray) -> int:
    cumulative = np.cumsum(weights) / np.sum(weights)
    return int(min(np.searchsorted(cumulative, u, side="right"), len(weights) - 1))


def generate_arrivals(
    scenario: Scenario,
    t: float,
    dt: float,
    rng_stream: np.random.Generator,
    first_id: int = 0,
    lanes: Optional[Sequence[Lane]] = None,
) -> list[VehicleState]:
    """Bernoulli-per-step arrivals on every approach, in a fixed draw order.

    The returned vehicles sit at the upstream link end with zero speed; the
    engine sets their entry speed when it inserts them.
    """
    lanes = list(lanes) if lanes is not None else scenario.lanes()
    shares = np.array([scenario.shares[f] for f in FLEET_ORDER])
    draws = rng_stream.random(len(APPROACH_ORDER))
    arrivals: list[VehicleState] = []
    for approach, u in zip(APPROACH_ORDER, draws):
        if u >= scenario.demands[approach] / 3600.0 * dt:
            continue
        fleet = FLEET_ORDER[_pick(rng_stream.random(), shares)]
        split = scenario.turning[approach]
        movement = MOVEMENT_ORDER[_pick(rng_stream.random(), np.array([split[m] for m in MOVEMENT_ORDER]))]
        candidates = [lane for lane in lanes if lane.approach is approach and movement in lane.movements]
        lane = candidates[int(rng_stream.integers(len(candidates)))]
        profile = scenario.profiles[fleet]
        arrivals.append(
            VehicleState(
                id=first_id + len(arrivals),
                fleet=fleet,
                approach=approach,
                movement=movement,
                lane_id=lane.lane_id,
                position=-scenario.link_length,
                speed=0.0,
                desired_speed=sample_desired_speed(fleet, rng_stream, scenario.v_base, profile),
                accel_multiplier=sample_accel_multiplier(profile, rng_stream),
                entry_time=t,
            )
        )
    return arrivals


def turning_speed_cap(position: np.ndarray) -> np.ndarray:
    """Desired-speed cap for turning vehicles upstream of the bar."""
    return np.sqrt(TURN_SPEED**2 + 2.0 * TURN_DECEL * np.maximum(-position - TURN_ZONE, 0.0))


@dataclass
class RunLog:
    """Everything one replication recorded."""

    scenario: Scenario
    vehicles: pd.DataFrame
    queue_snapshots: pd.DataFrame
    signal_events: pd.DataFrame
    queue_samples: pd.DataFrame
    trajectories: Optional[pd.DataFrame] = None
    diagnostics: dict[str, Any] = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return self.scenario.seed

    @property
    def scenario_id(self) -> str:
        return self.scenario.scenario_id

    def events(self) -> pd.DataFrame:
        """Signal changes and stop-bar crossings as one time-ordered trace."""
        signals = self.signal_events.assign(**{Columns.EVENT: "signal"})
        crossed = self.vehicles.dropna(subset=[Columns.CROSSING_TIME])
        crossings = pd.DataFrame(
            {
                Columns.TIME: crossed[Columns.CROSSING_TIME],
                Columns.EVENT: "crossing",
                Columns.GROUP: crossed[Columns.LANE_GROUP],
                Columns.INDICATION: crossed["crossing_indication"],
                Columns.VEHICLE_ID: crossed[Columns.VEHICLE_ID],
            }
        )
        trace = pd.concat([signals, crossings], ignore_index=True)
        return trace.sort_values([Columns.TIME, Columns.EVENT], kind="mergesort").reset_index(drop=True)


class World:
    """Mutable simulation state for one replication."""

    def __init__(self, scenario: Scenario, record_trajectories: bool = False):
        self.scenario = scenario
        self.dt = scenario.dt
        self.t = 0.0
        self.step_index = 0
        self.rng = np.random.default_rng(stream_seed(scenario.scenario_id, scenario.seed))
        self.lanes = scenario.lanes()
        self.group_ids = [g.group_id for g in scenario.lane_groups()]
        group_pos = {g: i for i, g in enumerate(self.group_ids)}
        self.lane_group_index = np.array([group_pos[lane.lane_group] for lane in self.lanes], dtype=np.int64)
        self.signals = SignalState(scenario.plan, self.group_ids)
        self.profiles = ProfileTable(scenario.profiles)
        self.record_trajectories = record_trajectories

        self.state: dict[str, np.ndarray] = {
            name: np.empty(0, dtype=dtype) for name, (dtype, _) in _STATE_FIELDS.items()
        }
        self.buffers: list[deque[VehicleState]] = [deque() for _ in self.lanes]
        self.next_id = 0
        self.generated = 0
        self.exited = 0
        self.min_gap = np.inf
        self.min_brick_wall_margin = np.inf
        self.max_buffered = 0

        self._records: list[dict[str, Any]] = []
        self._snapshots: list[tuple] = []
        self._signal_events: list[tuple] = []
        self._queue_samples: list[np.ndarray] = []
        self._trajectory: list[np.ndarray] = []
        self._last_indication: Optional[np.ndarray] = None

    # -- state helpers -------------------------------------------------

    @property
    def n_active(self) -> int:
        return len(self.state["id"])

    @property
    def n_buffered(self) -> int:
        return sum(len(b) for b in self.buffers)

    def _take(self, index: np.ndarray) -> None:
        self.state = {name: values[index] for name, values in self.state.items()}

    def add_vehicles(self, vehicles: Sequence[VehicleState], insert_time: Optional[float] = None) -> None:
        """Place vehicles directly on their lanes (no insertion checks).

        They count as generated, so conservation holds on the next step.
        """
        self._place(vehicles, insert_time)
        self.generated += len(vehicles)

    def _place(self, vehicles: Sequence[VehicleState], insert_time: Optional[float]) -> None:
        if not vehicles:
            return
        rows = {
            "id": [v.id for v in vehicles],
            "fleet": [Fleet(v.fleet).code for v in vehicles],
            "approach": [APPROACH_ORDER.index(Approach(v.approach)) for v in vehicles],
            "movement": [Movement(v.movement).code for v in vehicles],
            "lane": [v.lane_id for v in vehicles],
            "group": [self.lane_group_index[v.lane_id] for v in vehicles],
            "x": [v.position for v in vehicles],
            "v": [v.speed for v in vehicles],
            "a": [v.accel for v in vehicles],
            "desired": [v.desired_speed for v in vehicles],
            "mult": [v.accel_multiplier for v in vehicles],
            "entry_time": [v.entry_time for v in vehicles],
            "insert_time": [self.t if insert_time is None else insert_time for _ in vehicles],
            "crossing_time": [
                np.nan if v.stopbar_crossing_time is None else v.stopbar_crossing_time for v in vehicles
            ],
            "latch": [_CODE_BY_DECISION[v.amber_latch] for v in vehicles],
        }
        fresh = {
            name: np.asarray(rows.get(name, [fill] * len(vehicles)), dtype=dtype)
            for name, (dtype, fill) in _STATE_FIELDS.items()
        }
        self.state = {name: np.concatenate([self.state[name], fresh[name]]) for name in self.state}
        self.next_id = max(self.next_id, max(v.id for v in vehicles) + 1)

    def vehicles(self) -> list[VehicleState]:
        """Snapshot of the vehicles on the network as VehicleState objects."""
        s = self.state
        return [
            VehicleState(
                id=int(s["id"][i]),
                fleet=FLEET_ORDER[s["fleet"][i]],
                approach=APPROACH_ORDER[s["approach"][i]],
                movement=MOVEMENT_ORDER[s["movement"][i]],
                lane_id=int(s["lane"][i]),
                position=float(s["x"][i]),
                speed=float(s["v"][i]),
                accel=float(s["a"][i]),
                desired_speed=float(s["desired"][i]),
                accel_multiplier=float(s["mult"][i]),
                entry_time=float(s["entry_time"][i]),
                stopbar_crossing_time=None if np.isnan(s["crossing_time"][i]) else float(s["crossing_time"][i]),
                amber_latch=_DECISION_BY_CODE[int(s["latch"][i])],
            )
            for i in np.argsort(s["id"], kind="stable")
        ]

    # -- one step ------------------------------------------------------

    def step(self) -> World:
        """Advance the world by one time step (in place)."""
        t, dt = self.t, self.dt
        codes = self.signals.indication_codes(t)
        self._record_signals(t, codes)

        if self.n_active:
            self._take(np.lexsort((self.state["x"], self.state["lane"])))
            self._advance(t, dt, codes)

        s = self.state
        queued = (s["x"] < 0) & (s["v"] < STOPPED_SPEED)
        self._queue_samples.append(np.bincount(s["group"][queued], minlength=len(self.group_ids)))
        self.step_index += 1
        self.t = self.step_index * dt
        self._arrive_and_insert()
        self._check_conservation()
        return self

    def _record_signals(self, t: float, codes: np.ndarray) -> None:
        previous = self._last_indication
        changed = np.arange(len(codes)) if previous is None else np.nonzero(codes != previous)[0]
        for g in changed:
            self._signal_events.append((t, self.group_ids[g], _INDICATION_BY_CODE[int(codes[g])].value))
        if previous is not None:
            green = INDICATION_CODES[Indication.GREEN]
            for g in np.nonzero((codes == green) & (previous != green))[0]:
                self._snapshot_queue(t, int(g))
        self._last_indication = codes

    def _snapshot_queue(self, t: float, group: int) -> None:
        """Record the stopped vehicles lined up behind the bar at green onset."""
        s = self.state
        cycle = cycle_index(self.scenario.plan, t)
        for lane_id in np.nonzero(self.lane_group_index == group)[0]:
            upstream = np.nonzero((s["lane"] == lane_id) & (s["x"] < 0))[0]
            nearest_first = upstream[np.argsort(-s["x"][upstream], kind="stable")]
            moving = np.nonzero(s["v"][nearest_first] >= STOPPED_SPEED)[0]
            queued = nearest_first[: moving[0]] if len(moving) else nearest_first
            for position, i in enumerate(queued, start=1):
                self._snapshots.append(
                    (self.group_ids[group], int(lane_id), t, cycle, position, int(s["id"][i]))
                )

    def _advance(self, t: float, dt: float, codes: np.ndarray) -> None:
        s = self.state
        n = self.n_active
        x, v, a = s["x"], s["v"], s["a"]
        lane, fleet, group = s["lane"], s["fleet"], s["group"]
        params = self.profiles.take(fleet)
        idx = np.arange(n)
        upstream = x < 0

        # leaders from the sorted order: i+1 is the next vehicle ahead in the same lane
        leader = np.full(n, -1)
        same = lane[1:] == lane[:-1]
        leader[:-1][same] = idx[1:][same]
        has_leader = leader >= 0
        lead = np.where(has_leader, leader, idx)
        gap = np.where(has_leader, x[lead] - VEHICLE_LENGTH - x, NO_LEADER_GAP)
        if np.any(gap <= 0):
            self._corrupt("Non-positive gap before acceleration", t, idx, lead, gap, has_leader)

        # desired speed: turning cap, then SPaT advisory for connected vehicles
        desired = s["desired"].copy()
        turning = upstream & (s["movement"] != _THROUGH)
        desired[turning] = np.minimum(desired[turning], turning_speed_cap(x[turning]))
        advised = upstream & np.isin(fleet, _CONNECTED)
        if advised.any():
            starts_in, ends_in = self.signals.windows(t)
            g = group[advised]
            desired[advised] = np.minimum(
                desired[advised],
                advisory_speeds(
                    -x[advised],
                    starts_in[g],
                    ends_in[g],
                    self.scenario.plan.cycle_length,
                    self.signals.green[g],
                    desired[advised],
                    CRAWL_FLOOR,
                ),
            )

        # stop/go decisions and amber latches
        ind = codes[group]
        decision = np.where(
            upstream,
            stop_go_decisions(fleet, ind, -x, v, s["latch"], params.one_decision),
            DECISION_PROCEED,
        )
        latch = np.select(
            [ind == INDICATION_CODES[Indication.GREEN], ind == INDICATION_CODES[Indication.AMBER]],
            [DECISION_NONE, decision],
            default=s["latch"],
        )
        s["latch"] = np.where(upstream, latch, s["latch"])
        stopping = upstream & (decision == DECISION_STOP)

        in_zone = np.where(upstream, -x <= params.zone_upstream, x <= params.zone_downstream)
        starting = params.spat_startup & in_zone & (ind == INDICATION_CODES[Indication.GREEN])

        def reduced(mask: np.ndarray, leader_speed: np.ndarray, is_bar: bool) -> np.ndarray:
            queued = np.full(len(leader_speed), True) if is_bar else leader_speed < STOPPED_SPEED
            sub = self.profiles.take(fleet[mask])
            return safety_factors(sub, in_zone[mask], queued, starting[mask] & (not is_bar))

        def single_leader(mask: np.ndarray, net_gap, leader_speed, leader_accel, is_bar=False):
            sub = self.profiles.take(fleet[mask])
            return w99_acceleration(
                v[mask], net_gap, leader_speed, leader_accel, a[mask], desired[mask], s["mult"][mask], sub,
                reduced_factor=reduced(mask, leader_speed, is_bar), is_stop_bar=is_bar,
                green_start=starting[mask] & (not is_bar), dt=dt,
            )

        everyone = np.ones(n, dtype=bool)
        vl = np.where(has_leader, v[lead], v)
        accel = w99_acceleration(
            v, gap, vl, np.where(has_leader, a[lead], 0.0), a, desired, s["mult"], params,
            reduced_factor=np.where(has_leader, reduced(everyone, vl, False), 1.0),
            green_start=starting & has_leader, dt=dt,
        )

        # further leaders for multi-anticipation, with cumulative net gaps
        for k in range(2, self.profiles.max_interaction_count + 1):
            far = np.full(n, -1)
            if n > k:
                same_k = lane[k:] == lane[: n - k]
                far[: n - k][same_k] = idx[k:][same_k]
            mask = (far >= 0) & (params.interaction_count >= k)
            if mask.any():
                j = far[mask]
                accel[mask] = np.minimum(
                    accel[mask], single_leader(mask, x[j] - VEHICLE_LENGTH - x[mask], v[j], a[j])
                )

        if stopping.any():
            bar_gap = -x[stopping]
            zeros = np.zeros(int(stopping.sum()))
            accel[stopping] = np.minimum(accel[stopping], single_leader(stopping, bar_gap, zeros, zeros, True))

        eabd = params.eabd & (has_leader | stopping)
        if eabd.any():
            wall = np.minimum(gap, np.where(stopping, -x, NO_LEADER_GAP))
            accel[eabd] = absolute_braking_limit(accel[eabd], v[eabd], wall[eabd], dt=dt)

        # kinematics
        v_new = np.maximum(v + accel * dt, 0.0)
        x_new = x + 0.5 * (v + v_new) * dt

        crossed = (x < 0) & (x_new >= 0)
        if crossed.any():
            fraction = -x[crossed] / (x_new[crossed] - x[crossed])
            s["crossing_time"][crossed] = t + fraction * dt
            s["crossing_indication"][crossed] = ind[crossed]
        s["stops"] = s["stops"] + ((v >= STOPPED_SPEED) & (v_new < STOPPED_SPEED))

        new_gap = np.where(has_leader, x_new[lead] - VEHICLE_LENGTH - x_new, NO_LEADER_GAP)
        if np.any(new_gap <= 0):
            self._corrupt("Vehicles overlap after integration", t + dt, idx, lead, new_gap, has_leader)
        if has_leader.any():
            self.min_gap = min(self.min_gap, float(new_gap[has_leader].min()))
        wall_checked = params.eabd & has_leader
        if wall_checked.any():
            margin = new_gap[wall_checked] - v_new[wall_checked] ** 2 / (2.0 * B_EMAX)
            self.min_brick_wall_margin = min(self.min_brick_wall_margin, float(margin.min()))

        s["x"], s["v"], s["a"] = x_new, v_new, accel

        if self.record_trajectories:
            self._trajectory.append(
                np.column_stack([np.full(n, t + dt), s["id"], fleet, lane, x_new, v_new])
            )

        exit_at = np.where(s["movement"] == _THROUGH, self.scenario.downstream_length, 0.0)
        done = x_new >= exit_at
        if done.any():
            exit_time = t + dt * (exit_at[done] - x[done]) / np.maximum(x_new[done] - x[done], 1e-12)
            self._finalize(np.nonzero(done)[0], exit_time)
            self._take(np.nonzero(~done)[0])

    def _corrupt(self, message, t, idx, lead, gap, has_leader) -> None:
        bad = np.nonzero(has_leader & (gap <= 0))[0][0]
        s = self.state
        raise StateCorruptionError(
            message,
            {
                "t": round(float(t), 3),
                "lane": int(s["lane"][bad]),
                "follower": int(s["id"][idx[bad]]),
                "leader": int(s["id"][lead[bad]]),
                "gap": round(float(gap[bad]), 4),
            },
        )

    def _record(self, i: int, exit_time: float, complete: bool) -> dict[str, Any]:
        s = self.state
        return {
            Columns.VEHICLE_ID: int(s["id"][i]),
            Columns.FLEET: FLEET_ORDER[s["fleet"][i]].value,
            Columns.APPROACH: APPROACH_ORDER[s["approach"][i]].value,
            Columns.MOVEMENT: MOVEMENT_ORDER[s["movement"][i]].value,
            Columns.LANE_ID: int(s["lane"][i]),
            Columns.LANE_GROUP: self.group_ids[s["group"][i]],
            Columns.ENTRY_TIME: float(s["entry_time"][i]),
            Columns.INSERT_TIME: float(s["insert_time"][i]),
            Columns.CROSSING_TIME: float(s["crossing_time"][i]),
            Columns.EXIT_TIME: exit_time,
            Columns.DESIRED_SPEED: float(s["desired"][i]),
            Columns.STOPS: int(s["stops"][i]),
            "crossing_indication": (
                _INDICATION_BY_CODE[int(s["crossing_indication"][i])].value
                if s["crossing_indication"][i] >= 0
                else None
            ),
            "crossing_latch": (
                _DECISION_BY_CODE[int(s["latch"][i])].value if s["latch"][i] != DECISION_NONE else None
            ),
            Columns.COMPLETE: complete,
        }

    def _finalize(self, rows: np.ndarray, exit_times: np.ndarray) -> None:
        for i, exit_time in zip(rows, exit_times):
            self._records.append(self._record(int(i), float(exit_time), True))
        self.exited += len(rows)

    def _arrive_and_insert(self) -> None:
        arrivals = generate_arrivals(
            self.scenario, self.t, self.dt, self.rng, first_id=self.next_id, lanes=self.lanes
        )
        for vehicle in arrivals:
            self.buffers[vehicle.lane_id].append(vehicle)
        self.next_id += len(arrivals)
        self.generated += len(arrivals)

        s = self.state
        entry_x = -self.scenario.link_length
        inserted = []
        for lane_id, buffer in enumerate(self.buffers):
            if not buffer:
                continue
            vehicle = buffer[0]
            profile = self.scenario.profiles[Fleet(vehicle.fleet)]
            in_lane = np.nonzero(s["lane"] == lane_id)[0]
            speed = vehicle.desired_speed
            if len(in_lane):
                last = in_lane[np.argmin(s["x"][in_lane])]
                gap = s["x"][last] - VEHICLE_LENGTH - entry_x
                if gap < profile.cc0 + VEHICLE_LENGTH:
                    continue
                speed = min(speed, np.sqrt(s["v"][last] ** 2 + 2.0 * ENTRY_DECEL * max(gap - profile.cc0, 0.0)))
                if profile.eabd_enabled:
                    speed = min(speed, np.sqrt(2.0 * B_EMAX * gap))
            buffer.popleft()
            vehicle.position = entry_x
            vehicle.speed = float(speed)
            inserted.append(vehicle)
        self._place(inserted, insert_time=self.t)
        self.max_buffered = max(self.max_buffered, self.n_buffered)

    def _check_conservation(self) -> None:
        if self.generated != self.exited + self.n_active + self.n_buffered:
            raise StateCorruptionError(
                "Vehicle conservation violated",
                {
                    "t": round(self.t, 3),
                    "generated": self.generated,
                    "exited": self.exited,
                    "active": self.n_active,
                    "buffered": self.n_buffered,
                },
            )

    # -- results -------------------------------------------------------

    def to_run_log(self) -> RunLog:
        records = list(self._records)
        records += [self._record(i, np.nan, False) for i in range(self.n_active)]
        for buffer in self.buffers:
            for vehicle in buffer:
                records.append(
                    {
                        Columns.VEHICLE_ID: vehicle.id,
                        Columns.FLEET: Fleet(vehicle.fleet).value,
                        Columns.APPROACH: Approach(vehicle.approach).value,
                        Columns.MOVEMENT: Movement(vehicle.movement).value,
                        Columns.LANE_ID: vehicle.lane_id,
                        Columns.LANE_GROUP: self.group_ids[self.lane_group_index[vehicle.lane_id]],
                        Columns.ENTRY_TIME: vehicle.entry_time,
                        Columns.INSERT_TIME: np.nan,
                        Columns.CROSSING_TIME: np.nan,
                        Columns.EXIT_TIME: np.nan,
                        Columns.DESIRED_SPEED: vehicle.desired_speed,
                        Columns.STOPS: 0,
                        "crossing_indication": None,
                        "crossing_latch": None,
                        Columns.COMPLETE: False,
                    }
                )
        vehicles = pd.DataFrame.from_records(records, columns=VEHICLE_COLUMNS)
        vehicles = vehicles.sort_values(Columns.VEHICLE_ID, kind="mergesort").reset_index(drop=True)
        vehicles[Columns.FREE_FLOW_TIME] = free_flow_times(vehicles, self.scenario)

        samples = (
            np.vstack(self._queue_samples)
            if self._queue_samples
            else np.empty((0, len(self.group_ids)), dtype=np.int64)
        )
        queue_samples = pd.DataFrame(samples, columns=self.group_ids)
        queue_samples.insert(0, Columns.TIME, (np.arange(len(samples)) + 1) * self.dt)

        trajectories = None
        if self.record_trajectories:
            stacked = np.vstack(self._trajectory) if self._trajectory else np.empty((0, 6))
            trajectories = pd.DataFrame(
                stacked,
                columns=[Columns.TIME, Columns.VEHICLE_ID, Columns.FLEET, Columns.LANE_ID, Columns.POSITION, Columns.SPEED],
            ).astype({Columns.VEHICLE_ID: np.int64, Columns.LANE_ID: np.int64})
            trajectories[Columns.FLEET] = [FLEET_ORDER[int(c)].value for c in stacked[:, 2]]

        return RunLog(
            scenario=self.scenario,
            vehicles=vehicles,
            queue_snapshots=pd.DataFrame(self._snapshots, columns=SNAPSHOT_COLUMNS),
            signal_events=pd.DataFrame(
                self._signal_events, columns=[Columns.TIME, Columns.GROUP, Columns.INDICATION]
            ),
            queue_samples=queue_samples,
            trajectories=trajectories,
            diagnostics={
                "steps": self.step_index,
                "generated": self.generated,
                "exited": self.exited,
                "active": self.n_active,
                "buffered": self.n_buffered,
                "max_buffered": self.max_buffered,
                "min_gap": self.min_gap,
                "min_brick_wall_margin": self.min_brick_wall_margin,
            },
        )


VEHICLE_COLUMNS = [
    Columns.VEHICLE_ID,
    Columns.FLEET,
    Columns.APPROACH,
    Columns.MOVEMENT,
    Columns.LANE_ID,
    Columns.LANE_GROUP,
    Columns.ENTRY_TIME,
    Columns.INSERT_TIME,
    Columns.CROSSING_TIME,
    Columns.EXIT_TIME,
    Columns.DESIRED_SPEED,
    Columns.STOPS,
    "crossing_indication",
    "crossing_latch",
    Columns.COMPLETE,
]

SNAPSHOT_COLUMNS = [Columns.LANE_GROUP, Columns.LANE_ID, "onset_time", "cycle_index", "queue_position", Columns.VEHICLE_ID]


def free_flow_times(vehicles: pd.DataFrame, scenario: Scenario) -> np.ndarray:
    """Traversal time of each vehicle driving alone through a permanent green.

    Every vehicle is replayed with the engine's own free-driving law (same
    desired speed, same turning cap, same exit boundary) starting at its
    desired speed from the upstream link end.
    """
    n = len(vehicles)
    if n == 0:
        return np.empty(0)
    dt = scenario.dt
    table = ProfileTable(scenario.profiles)
    fleet = np.array([Fleet(f).code for f in vehicles[Columns.FLEET]], dtype=np.int64)
    params = table.take(fleet)
    through = (vehicles[Columns.MOVEMENT] == Movement.THROUGH.value).to_numpy()
    base = vehicles[Columns.DESIRED_SPEED].to_numpy(dtype=float)
    exit_at = np.where(through, scenario.downstream_length, 0.0)

    x = np.full(n, -scenario.link_length)
    v = base.copy()
    a = np.zeros(n)
    result = np.full(n, np.nan)
    active = np.ones(n, dtype=bool)
    k = 0
    max_steps = int(np.ceil((scenario.link_length + scenario.downstream_length) / (0.5 * dt))) + 1
    while active.any() and k < max_steps:
        desired = np.where(~through & (x < 0), np.minimum(base, turning_speed_cap(x)), base)
        accel = w99_acceleration(
            v, np.full(n, NO_LEADER_GAP), v, np.zeros(n), a, desired, 1.0, params, dt=dt
        )
        v_new = np.maximum(v + accel * dt, 0.0)
        x_new = x + 0.5 * (v + v_new) * dt
        done = active & (x_new >= exit_at)
        result[done] = (k + (exit_at[done] - x[done]) / np.maximum(x_new[done] - x[done], 1e-12)) * dt
        active &= ~done
        x, v, a = x_new, v_new, accel
        k += 1
    return result


def step(world: World, dt: Optional[float] = None) -> World:
    """Advance ``world`` by one step; ``dt`` must match the scenario's step if given."""
    if dt is not None and not np.isclose(dt, world.dt):
        raise ValueError(f"World was built for dt={world.dt}, got dt={dt}")
    return world.step()


def run(scenario: Scenario, record_trajectories: bool = False) -> RunLog:
    """Run one replication: warmup plus the measured horizon."""
    world = World(scenario, record_trajectories=record_trajectories)
    n_steps = int(round((scenario.warmup + scenario.duration) / scenario.dt))
    logger.info(
        "Running scenario %s seed %d for %d steps", scenario.scenario_id, scenario.seed, n_steps
    )
    for _ in range(n_steps):
        world.step()
    log = world.to_run_log()
    logger.info(
        "Finished scenario %s seed %d: %d generated, %d exited, %d still on network",
        scenario.scenario_id,
        scenario.seed,
        world.generated,
        world.exited,
        world.n_active + world.n_buffered,
    )
    return log
