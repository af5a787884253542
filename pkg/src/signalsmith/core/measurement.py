"""Mobility measures derived from a RunLog.

Saturation headway follows the field queue-discharge procedure: the timer
starts when the fourth queued vehicle crosses the stop bar and stops at the
last of the seventh to tenth; queues shorter than seven are not used.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
import pandas as pd

from signalsmith.core.contracts import FLEET_ORDER, RESULTS_COLUMNS, Columns, LaneType
from signalsmith.core.sim_engine import RunLog

logger = logging.getLogger(__name__)

MTES_FIRST = 4
MTES_LAST = 10
MIN_QUEUE = 7
MIN_VALID_QUEUES = 30
PERIOD_LENGTH = 900.0  # s
INTERSECTION = "intersection"

_INDICATORS: dict[LaneType, tuple[int, int, int]] = {
    LaneType.EXCLUSIVE_LEFT: (1, 0, 0),
    LaneType.EXCLUSIVE_THROUGH: (0, 0, 0),
    LaneType.EXCLUSIVE_RIGHT: (0, 1, 0),
    LaneType.SHARED_THROUGH_RIGHT: (0, 0, 1),
}


@dataclass(frozen=True)
class QueueDischargeRecord:
    """One red-to-green discharge of one lane."""

    lane_group_id: str
    cycle_index: int
    queue_size_at_green: int
    crossing_times: tuple[float, ...]
    valid: bool
    period_index: int
    lane_id: int = -1
    onset_time: float = 0.0

    @property
    def last(self) -> int:
        """Index (1-based) of the vehicle that stops the timer."""
        return min(self.queue_size_at_green, MTES_LAST, len(self.crossing_times))

    def headway(self) -> Optional[float]:
        if not self.valid or self.last <= MTES_FIRST:
            return None
        t_first = self.crossing_times[MTES_FIRST - 1]
        t_last = self.crossing_times[self.last - 1]
        return (t_last - t_first) / (self.last - MTES_FIRST)


@dataclass(frozen=True)
class HeadwayEstimate:
    """Saturation headway with its sample size; ``h_s`` is None when no valid queue exists."""

    h_s: Optional[float]
    n_queues: int
    low_sample: bool


def extract_discharges(run_log: RunLog) -> list[QueueDischargeRecord]:
    """Turn green-onset queue snapshots into discharge records for the measured horizon.

    A queued vehicle counts as discharged if it crosses during the same green
    or the amber that follows it; the crossing list stops at the first queued
    vehicle that did not.
    """
    snapshots = run_log.queue_snapshots
    scenario = run_log.scenario
    if snapshots.empty:
        return []
    start, end = scenario.warmup, scenario.warmup + scenario.duration
    measured = snapshots[(snapshots["onset_time"] >= start) & (snapshots["onset_time"] < end)]
    crossing = run_log.vehicles.set_index(Columns.VEHICLE_ID)[Columns.CROSSING_TIME]

    records = []
    keys = [Columns.LANE_GROUP, Columns.LANE_ID, "onset_time"]
    for (group, lane_id, onset), queue in measured.groupby(keys, sort=True):
        queue = queue.sort_values("queue_position")
        phase = scenario.plan.phase_of(group)
        times = crossing.reindex(queue[Columns.VEHICLE_ID]).to_numpy(dtype=float)
        in_window = np.isfinite(times) & (times >= onset) & (times <= onset + phase.green + phase.amber)
        discharged = len(times) if in_window.all() else int(np.argmin(in_window))
        size = len(queue)
        records.append(
            QueueDischargeRecord(
                lane_group_id=str(group),
                cycle_index=int(queue["cycle_index"].iloc[0]),
                queue_size_at_green=size,
                crossing_times=tuple(float(t) for t in times[:discharged]),
                valid=size >= MIN_QUEUE,
                period_index=int((onset - start) // PERIOD_LENGTH),
                lane_id=int(lane_id),
                onset_time=float(onset),
            )
        )
    return records


def saturation_headway(
    records: Sequence[QueueDischargeRecord], period: Optional[int] = None
) -> HeadwayEstimate:
    """Mean MTES headway over valid records, optionally for one 15-minute period.

    ``low_sample`` always refers to the whole run: fewer than 30 valid queues.
    """
    groups = {r.lane_group_id for r in records}
    if len(groups) > 1:
        raise ValueError(f"saturation_headway expects one lane group, got {sorted(groups)}")
    usable = [r for r in records if r.headway() is not None]
    low_sample = len(usable) < MIN_VALID_QUEUES
    if period is not None:
        usable = [r for r in usable if r.period_index == period]
    if not usable:
        return HeadwayEstimate(h_s=None, n_queues=0, low_sample=low_sample)
    return HeadwayEstimate(
        h_s=float(np.mean([r.headway() for r in usable])), n_queues=len(usable), low_sample=low_sample
    )


def control_delay(vehicle_record: Mapping[str, Any], free_flow_time: float) -> Optional[float]:
    """Actual traversal time minus free-flow time; None for vehicles that did not finish."""
    exit_time = vehicle_record.get(Columns.EXIT_TIME)
    if not vehicle_record.get(Columns.COMPLETE, False) or exit_time is None or not math.isfinite(exit_time):
        return None
    return float(exit_time - vehicle_record[Columns.ENTRY_TIME] - free_flow_time)


@dataclass
class QueueThroughput:
    """Per-lane-group queue series over the measured horizon plus hourly totals."""

    series: pd.DataFrame
    mean_queue: dict[str, float]
    throughput: dict[str, float]

    @property
    def total_throughput(self) -> float:
        return float(sum(self.throughput.values()))

    @property
    def total_queue(self) -> float:
        return float(sum(self.mean_queue.values()))


def queue_length_and_throughput(run_log: RunLog) -> QueueThroughput:
    """Mean stopped-vehicle count per lane group and stop-bar crossings per hour."""
    scenario = run_log.scenario
    start, end = scenario.warmup, scenario.warmup + scenario.duration
    groups = [g.group_id for g in scenario.lane_groups()]
    samples = run_log.queue_samples
    series = samples[(samples[Columns.TIME] > start) & (samples[Columns.TIME] <= end + 1e-9)]
    mean_queue = {g: float(series[g].mean()) if len(series) else 0.0 for g in groups}

    crossed = run_log.vehicles[
        (run_log.vehicles[Columns.CROSSING_TIME] >= start) & (run_log.vehicles[Columns.CROSSING_TIME] < end)
    ]
    counts = crossed.groupby(Columns.LANE_GROUP).size()
    scale = 3600.0 / scenario.duration
    throughput = {g: float(counts.get(g, 0)) * scale for g in groups}
    return QueueThroughput(series=series.reset_index(drop=True), mean_queue=mean_queue, throughput=throughput)


def measured_vehicles(run_log: RunLog) -> pd.DataFrame:
    """Completed vehicles generated inside the measured horizon, with delay and travel time."""
    scenario = run_log.scenario
    vehicles = run_log.vehicles
    start, end = scenario.warmup, scenario.warmup + scenario.duration
    done = vehicles[
        vehicles[Columns.COMPLETE].astype(bool)
        & (vehicles[Columns.ENTRY_TIME] >= start)
        & (vehicles[Columns.ENTRY_TIME] < end)
    ]
    travel = done[Columns.EXIT_TIME] - done[Columns.ENTRY_TIME]
    return done.assign(**{Columns.TRAVEL_TIME: travel, Columns.DELAY: travel - done[Columns.FREE_FLOW_TIME]})


@dataclass
class MobilitySummary:
    """Per-lane-group and intersection measures of one replication."""

    lane_groups: pd.DataFrame
    periods: pd.DataFrame
    intersection: dict[str, Any] = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        """Results rows (lane groups then the intersection row) in canonical column order."""
        row = pd.DataFrame([self.intersection], columns=RESULTS_COLUMNS)
        return pd.concat([self.lane_groups, row], ignore_index=True)[RESULTS_COLUMNS]


def _nan_mean(values: pd.Series) -> float:
    return float(values.mean()) if len(values) else float("nan")


def summarize_run(run_log: RunLog, records: Optional[Sequence[QueueDischargeRecord]] = None) -> MobilitySummary:
    """Aggregate a replication into results rows and per-period headways."""
    scenario = run_log.scenario
    records = list(records) if records is not None else extract_discharges(run_log)
    queues = queue_length_and_throughput(run_log)
    vehicles = measured_vehicles(run_log)
    shares = {f.value.lower(): scenario.shares[f] for f in FLEET_ORDER}
    keys = {Columns.SCENARIO_ID: scenario.scenario_id, Columns.SEED: scenario.seed}
    n_periods = int(math.ceil(scenario.duration / PERIOD_LENGTH))

    rows, period_rows, low = [], [], []
    for group in scenario.lane_groups():
        group_records = [r for r in records if r.lane_group_id == group.group_id]
        estimate = saturation_headway(group_records)
        if estimate.low_sample:
            low.append(group.group_id)
        d_exl, d_exr, d_shtr = _INDICATORS[group.lane_type]
        in_group = vehicles[vehicles[Columns.LANE_GROUP] == group.group_id]
        rows.append(
            {
                **keys,
                Columns.LANE_GROUP: group.group_id,
                Columns.APPROACH: group.approach.value,
                Columns.LANE_TYPE: group.lane_type.value,
                **shares,
                Columns.D_EXL: d_exl,
                Columns.D_EXR: d_exr,
                Columns.D_SHTR: d_shtr,
                Columns.RT: scenario.right_turn_percent(group.approach) if d_shtr else 0.0,
                Columns.H_S: estimate.h_s if estimate.h_s is not None else np.nan,
                Columns.N_QUEUES: estimate.n_queues,
                Columns.LOW_SAMPLE: estimate.low_sample,
                Columns.DELAY: _nan_mean(in_group[Columns.DELAY]),
                Columns.TRAVEL_TIME: _nan_mean(in_group[Columns.TRAVEL_TIME]),
                Columns.QUEUE_LENGTH: queues.mean_queue[group.group_id],
                Columns.THROUGHPUT: queues.throughput[group.group_id],
                Columns.STOPS: _nan_mean(in_group[Columns.STOPS]),
            }
        )
        for period in range(n_periods):
            in_period = saturation_headway(group_records, period=period)
            period_rows.append(
                {
                    **keys,
                    Columns.LANE_GROUP: group.group_id,
                    Columns.PERIOD: period,
                    Columns.H_S: in_period.h_s if in_period.h_s is not None else np.nan,
                    Columns.N_QUEUES: in_period.n_queues,
                }
            )

    lane_groups = pd.DataFrame(rows, columns=RESULTS_COLUMNS)
    if low:
        logger.warning(
            "Scenario %s seed %s: fewer than %d valid queues for %s",
            scenario.scenario_id,
            scenario.seed,
            MIN_VALID_QUEUES,
            ", ".join(low),
        )

    measured_h = lane_groups.dropna(subset=[Columns.H_S])
    weights = measured_h[Columns.THROUGHPUT]
    h_intersection = (
        float(np.average(measured_h[Columns.H_S], weights=weights)) if weights.sum() > 0 else float("nan")
    )
    total_queues = int(lane_groups[Columns.N_QUEUES].sum())
    intersection = {
        **keys,
        Columns.LANE_GROUP: INTERSECTION,
        Columns.APPROACH: "",
        Columns.LANE_TYPE: LaneType.INTERSECTION.value,
        **shares,
        Columns.D_EXL: 0,
        Columns.D_EXR: 0,
        Columns.D_SHTR: 0,
        Columns.RT: 0.0,
        Columns.H_S: h_intersection,
        Columns.N_QUEUES: total_queues,
        Columns.LOW_SAMPLE: total_queues < MIN_VALID_QUEUES,
        Columns.DELAY: _nan_mean(vehicles[Columns.DELAY]),
        Columns.TRAVEL_TIME: _nan_mean(vehicles[Columns.TRAVEL_TIME]),
        Columns.QUEUE_LENGTH: queues.total_queue,
        Columns.THROUGHPUT: queues.total_throughput,
        Columns.STOPS: _nan_mean(vehicles[Columns.STOPS]),
    }
    periods = pd.DataFrame(
        period_rows, columns=[Columns.SCENARIO_ID, Columns.SEED, Columns.LANE_GROUP, Columns.PERIOD, Columns.H_S, Columns.N_QUEUES]
    )
    return MobilitySummary(lane_groups=lane_groups, periods=periods, intersection=intersection)
