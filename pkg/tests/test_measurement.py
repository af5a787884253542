"""Tests for MTES saturation headway, delay, queue length and throughput."""

import numpy as np
import pandas as pd
import pytest

from signalsmith.core.contracts import RESULTS_COLUMNS, Columns, LaneType
from signalsmith.core.measurement import (
    MIN_VALID_QUEUES,
    QueueDischargeRecord,
    control_delay,
    extract_discharges,
    queue_length_and_throughput,
    saturation_headway,
    summarize_run,
)
from signalsmith.core.sim_engine import SNAPSHOT_COLUMNS, RunLog, run
from tests.conftest import eb_scenario


def discharge(h, queue_size, start=10.0, group="EB_T", period=0, cycle=0):
    times = tuple(start + h * k for k in range(queue_size))
    return QueueDischargeRecord(
        lane_group_id=group,
        cycle_index=cycle,
        queue_size_at_green=queue_size,
        crossing_times=times,
        valid=queue_size >= 7,
        period_index=period,
    )


@pytest.mark.parametrize("queue_size", [7, 8, 9, 10, 11, 12])
def test_constant_headway_is_recovered_exactly(queue_size):
    estimate = saturation_headway([discharge(1.87, queue_size)])
    assert estimate.h_s == pytest.approx(1.87, abs=1e-12)
    assert estimate.n_queues == 1


def test_timer_runs_from_fourth_to_tenth():
    # t_4 = 8.0, t_10 = 20.0 with irregular early crossings
    times = (1.0, 3.5, 5.0, 8.0, 10.5, 12.0, 14.0, 16.5, 18.0, 20.0, 23.0, 30.0)
    record = QueueDischargeRecord("EB_T", 0, 12, times, True, 0)
    assert record.last == 10
    assert record.headway() == pytest.approx(2.0)


def test_queue_of_eight_stops_at_eighth():
    times = (2.0, 4.0, 6.5, 9.0, 11.0, 13.0, 15.0, 17.0)
    record = QueueDischargeRecord("EB_T", 0, 8, times, True, 0)
    assert record.headway() == pytest.approx(8.0 / 4.0)


def test_short_queues_are_excluded():
    short = discharge(5.0, 3)
    assert not short.valid
    assert short.headway() is None
    estimate = saturation_headway([short, discharge(2.0, 10)])
    assert estimate.h_s == pytest.approx(2.0)
    assert estimate.n_queues == 1


def test_no_valid_queue_is_absent():
    estimate = saturation_headway([discharge(2.0, 4)])
    assert estimate.h_s is None
    assert estimate.n_queues == 0
    assert estimate.low_sample


def test_low_sample_threshold():
    records = [discharge(2.0, 10, cycle=i) for i in range(MIN_VALID_QUEUES - 1)]
    assert saturation_headway(records).low_sample
    records.append(discharge(2.0, 10, cycle=MIN_VALID_QUEUES))
    assert not saturation_headway(records).low_sample


def test_doubling_gaps_doubles_headway():
    rng = np.random.default_rng(4)
    records = [discharge(h, int(q)) for h, q in zip(rng.uniform(1.5, 2.5, 20), rng.integers(7, 13, 20))]
    doubled = [discharge(2 * r.headway(), r.queue_size_at_green) for r in records]
    assert saturation_headway(doubled).h_s == pytest.approx(2 * saturation_headway(records).h_s)


def test_period_filter_keeps_run_level_sample_flag():
    records = [discharge(2.0, 10, period=0), discharge(3.0, 10, period=1)]
    assert saturation_headway(records, period=1).h_s == pytest.approx(3.0)
    assert saturation_headway(records, period=2).h_s is None
    assert saturation_headway(records).h_s == pytest.approx(2.5)


def test_one_group_only():
    with pytest.raises(ValueError, match="one lane group"):
        saturation_headway([discharge(2.0, 10, group="EB_T"), discharge(2.0, 10, group="EB_L")])


def test_control_delay():
    record = {Columns.ENTRY_TIME: 100.0, Columns.EXIT_TIME: 160.0, Columns.COMPLETE: True}
    assert control_delay(record, 26.0) == pytest.approx(34.0)
    unfinished = {Columns.ENTRY_TIME: 100.0, Columns.EXIT_TIME: float("nan"), Columns.COMPLETE: False}
    assert control_delay(unfinished, 26.0) is None


def _log_with_queue(crossings):
    scenario = eb_scenario()
    n = len(crossings)
    snapshots = pd.DataFrame(
        [("EB_T", 0, 128.0, 2, k + 1, k) for k in range(n)], columns=SNAPSHOT_COLUMNS
    )
    vehicles = pd.DataFrame({Columns.VEHICLE_ID: range(n), Columns.CROSSING_TIME: crossings})
    empty = pd.DataFrame()
    return RunLog(scenario, vehicles, snapshots, empty, empty)


def test_extract_discharges_from_snapshots():
    (record,) = extract_discharges(_log_with_queue([130.0 + 2.0 * k for k in range(10)]))
    assert record.lane_group_id == "EB_T"
    assert record.queue_size_at_green == 10
    assert record.valid
    assert record.period_index == 0
    assert record.headway() == pytest.approx(2.0)


def test_extract_discharges_stops_at_first_vehicle_left_behind():
    crossings = [130.0 + 2.0 * k for k in range(6)] + [np.nan, 300.0]
    (record,) = extract_discharges(_log_with_queue(crossings))
    assert record.queue_size_at_green == 8
    assert len(record.crossing_times) == 6
    assert record.headway() is not None


def test_warmup_snapshots_are_ignored():
    log = _log_with_queue([130.0 + 2.0 * k for k in range(10)])
    log.queue_snapshots["onset_time"] = 30.0
    assert extract_discharges(log) == []


def test_empty_run_has_no_queue_or_throughput():
    log = run(eb_scenario(demand=0.0, duration=60.0, warmup=0.0))
    measures = queue_length_and_throughput(log)
    assert measures.total_queue == 0.0
    assert measures.total_throughput == 0.0
    assert extract_discharges(log) == []


def test_throughput_bounded_by_entered(mixed_run_log):
    measures = queue_length_and_throughput(mixed_run_log)
    scenario = mixed_run_log.scenario
    crossed_per_hour = measures.throughput["EB_T"] * scenario.duration / 3600.0
    assert crossed_per_hour <= mixed_run_log.diagnostics["generated"]
    assert measures.mean_queue["EB_T"] >= 0


def test_summary_rows(mixed_run_log):
    summary = summarize_run(mixed_run_log)
    frame = summary.to_frame()
    assert list(frame.columns) == RESULTS_COLUMNS
    assert list(frame[Columns.LANE_TYPE]) == [LaneType.EXCLUSIVE_THROUGH.value, LaneType.INTERSECTION.value]
    assert frame[Columns.CAV].tolist() == [0.25, 0.25]
    assert (frame[[Columns.D_EXL, Columns.D_EXR, Columns.D_SHTR]].to_numpy() == 0).all()
    assert len(summary.periods) == 1
