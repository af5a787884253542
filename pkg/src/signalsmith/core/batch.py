"""Run many independent replications, optionally across worker processes."""

from __future__ import annotations

import logging
import multiprocessing as mp
from collections.abc import Sequence
from concurrent.futures import FIRST_EXCEPTION, ProcessPoolExecutor, wait
from typing import Callable, TypeVar

from signalsmith.core.errors import SweepError
from signalsmith.core.scenario import Scenario

logger = logging.getLogger(__name__)

T = TypeVar("T")


def _guarded(task: Callable[[Scenario], T], scenario: Scenario) -> T:
    try:
        return task(scenario)
    except SweepError:
        raise
    except Exception as e:
        raise SweepError(scenario.scenario_id, scenario.seed, e) from e


def run_batch(
    task: Callable[[Scenario], T], scenarios: Sequence[Scenario], parallelism: int = 1
) -> list[T]:
    """Apply ``task`` to every scenario and return the results in input order.

    ``task`` must be a module-level function when ``parallelism > 1``. The
    first failure cancels queued runs, waits for the in-flight ones and is
    re-raised as a SweepError naming the scenario and seed.
    """
    if parallelism < 1:
        raise ValueError(f"parallelism must be >= 1, got {parallelism}")
    total = len(scenarios)
    if parallelism == 1 or total <= 1:
        results = []
        for done, scenario in enumerate(scenarios, start=1):
            results.append(_guarded(task, scenario))
            logger.info("Completed %s seed %d (%d/%d)", scenario.scenario_id, scenario.seed, done, total)
        return results

    with ProcessPoolExecutor(max_workers=parallelism, mp_context=mp.get_context("spawn")) as pool:
        futures = [pool.submit(_guarded, task, scenario) for scenario in scenarios]
        pending = set(futures)
        completed = 0
        while pending:
            finished, pending = wait(pending, return_when=FIRST_EXCEPTION)
            failed = [f for f in finished if f.exception() is not None]
            if failed:
                for future in pending:
                    future.cancel()
                wait(pending)
                first = min(failed, key=futures.index)
                raise first.exception()
            completed += len(finished)
            logger.info("Completed %d/%d replications", completed, total)
        return [future.result() for future in futures]
