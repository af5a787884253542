"""Grid search of the human-driver standstill distance and headway time (cc0, cc1)."""

from __future__ import annotations

import itertools
import logging
import warnings
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np
import pandas as pd

from signalsmith.core.batch import run_batch
from signalsmith.core.contracts import Fleet, LaneType
from signalsmith.core.driver_model import DriverProfile
from signalsmith.core.errors import CalibrationError, ConfigurationError
from signalsmith.core.measurement import QueueDischargeRecord, extract_discharges
from signalsmith.core.scenario import Scenario
from signalsmith.core.sim_engine import run

logger = logging.getLogger(__name__)

DEFAULT_TARGET_H = 2.0
DEFAULT_CC0_GRID = tuple(np.round(np.arange(1.0, 2.0 + 1e-9, 0.25), 2))
DEFAULT_CC1_GRID = tuple(np.round(np.arange(0.9, 1.6 + 1e-9, 0.05), 2))
CALIBRATED_FLEETS = (Fleet.HV, Fleet.CV)

TABLE_COLUMNS = ["cc0", "cc1", "h_s", "n_queues", "abs_error", "skipped"]


@dataclass
class CalibrationResult:
    """Chosen (cc0, cc1) with the headway it achieved and every grid point's outcome."""

    cc0: float
    cc1: float
    achieved_h: float
    target_h: float
    table: pd.DataFrame

    def apply(self, profiles: Mapping[Fleet, DriverProfile]) -> dict[Fleet, DriverProfile]:
        return with_human_parameters(profiles, self.cc0, self.cc1)

    def overrides(self) -> dict[str, dict[str, float]]:
        """The calibration as a profile-override mapping."""
        return {fleet.value: {"cc0": self.cc0, "cc1": self.cc1} for fleet in CALIBRATED_FLEETS}


def with_human_parameters(
    profiles: Mapping[Fleet, DriverProfile], cc0: float, cc1: float
) -> dict[Fleet, DriverProfile]:
    """Human-driven profiles (HV and CV) with cc0/cc1 replaced."""
    result = dict(profiles)
    for fleet in CALIBRATED_FLEETS:
        result[fleet] = result[fleet].with_overrides(cc0=cc0, cc1=cc1)
    return result


def _through_groups(scenario: Scenario) -> set[str]:
    return {g.group_id for g in scenario.lane_groups() if g.lane_type is LaneType.EXCLUSIVE_THROUGH}


def through_discharges(scenario: Scenario) -> list[QueueDischargeRecord]:
    """Discharge records of the exclusive-through lane groups of one replication."""
    groups = _through_groups(scenario)
    return [r for r in extract_discharges(run(scenario)) if r.lane_group_id in groups]


def pooled_headway(records: Sequence[QueueDischargeRecord]) -> tuple[float, int]:
    """Mean MTES headway over every valid queue in ``records`` and the queue count."""
    headways = [h for h in (r.headway() for r in records) if h is not None]
    if not headways:
        return float("nan"), 0
    return float(np.mean(headways)), len(headways)


def calibrate_base(
    target_h: float,
    cc0_grid: Sequence[float],
    cc1_grid: Sequence[float],
    scenario_base: Scenario,
    replications: int = 3,
    seed_base: int = 1,
    parallelism: int = 1,
) -> CalibrationResult:
    """Pick the (cc0, cc1) pair whose base scenario headway is closest to ``target_h``.

    Every grid point runs ``replications`` seeds of the 100% HV scenario with the
    human-driven profiles overridden; headways are pooled over the valid queues
    of all exclusive-through lanes. Ties go to the smaller cc1, then the
    smaller cc0. Points without any valid queue are skipped with a warning.

    Raises:
        ConfigurationError: empty grids, non-HV fleet or no exclusive-through lane
        CalibrationError: every grid point was skipped
    """
    if not cc0_grid or not cc1_grid:
        raise ConfigurationError("cc0_grid and cc1_grid must be nonempty", field="cc0_grid" if not cc0_grid else "cc1_grid")
    if replications < 1:
        raise ConfigurationError("replications must be >= 1", field="replications")
    if not np.isclose(scenario_base.shares[Fleet.HV], 1.0):
        raise ConfigurationError("Calibration needs a 100% HV scenario", field="shares")
    if not _through_groups(scenario_base):
        raise ConfigurationError("Calibration needs an exclusive-through lane group", field="geometry")

    points = list(itertools.product((float(c) for c in cc0_grid), (float(c) for c in cc1_grid)))
    seeds = [seed_base + r for r in range(replications)]
    jobs = []
    for cc0, cc1 in points:
        profiles = with_human_parameters(scenario_base.profiles, cc0, cc1)
        jobs.extend(scenario_base.with_profiles(profiles).with_seed(seed) for seed in seeds)

    logger.info(
        "Calibrating %d grid points x %d replications toward h_s = %.3f s", len(points), replications, target_h
    )
    outcomes = run_batch(through_discharges, jobs, parallelism=parallelism)

    rows = []
    for index, (cc0, cc1) in enumerate(points):
        pooled = list(itertools.chain.from_iterable(outcomes[index * replications : (index + 1) * replications]))
        h, n_queues = pooled_headway(pooled)
        skipped = n_queues == 0
        if skipped:
            message = f"Calibration point cc0={cc0:g}, cc1={cc1:g} produced no valid queue; skipped"
            warnings.warn(message)
            logger.warning(message)
        else:
            logger.info("cc0=%g cc1=%g -> h_s=%.3f s over %d queues", cc0, cc1, h, n_queues)
        rows.append(
            {
                "cc0": cc0,
                "cc1": cc1,
                "h_s": h,
                "n_queues": n_queues,
                "abs_error": abs(h - target_h) if not skipped else np.nan,
                "skipped": skipped,
            }
        )
    table = pd.DataFrame(rows, columns=TABLE_COLUMNS)

    usable = table[~table["skipped"]]
    if usable.empty:
        raise CalibrationError(f"All {len(points)} calibration points were skipped (no valid queues)")
    best = usable.sort_values(["abs_error", "cc1", "cc0"], kind="mergesort").iloc[0]
    result = CalibrationResult(
        cc0=float(best["cc0"]),
        cc1=float(best["cc1"]),
        achieved_h=float(best["h_s"]),
        target_h=float(target_h),
        table=table,
    )
    logger.info(
        "Calibrated cc0=%g cc1=%g: h_s=%.3f s (target %.3f s)",
        result.cc0,
        result.cc1,
        result.achieved_h,
        result.target_h,
    )
    return result
