"""Typed results per command.

This module provides structured result objects for API responses.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import pandas as pd


@dataclass
class _TableResults:
    metrics: dict[str, Any]
    output_dir: str
    tables: dict[str, str] = field(default_factory=dict)
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def metrics_path(self) -> Path:
        """Path to metrics JSON file."""
        return Path(self.output_dir) / "metrics.json"

    def table_path(self, name: str) -> Optional[Path]:
        table_path = self.tables.get(name)
        return Path(table_path) if table_path else None

    def load_table(self, name: str) -> pd.DataFrame:
        """Read one of the written CSV tables back."""
        path = self.table_path(name)
        if path is None:
            raise KeyError(f"No table named {name!r}; available: {sorted(self.tables)}")
        return pd.read_csv(path)


@dataclass
class RunResults(_TableResults):
    """Results from a single replication."""

    @property
    def results_table(self) -> Optional[Path]:
        """Path to the per-lane-group results CSV."""
        return self.table_path("results")

    @property
    def trajectories_table(self) -> Optional[Path]:
        return self.table_path("trajectories")


@dataclass
class SweepResults(_TableResults):
    """Results from a scenario sweep."""

    @property
    def results_table(self) -> Optional[Path]:
        return self.table_path("results")

    @property
    def manifest_table(self) -> Optional[Path]:
        return self.table_path("manifest")


@dataclass
class CalibrationResults(_TableResults):
    """Results from a cc0/cc1 calibration."""

    @property
    def cc0(self) -> float:
        return float(self.metrics["cc0"])

    @property
    def cc1(self) -> float:
        return float(self.metrics["cc1"])

    @property
    def achieved_h(self) -> float:
        return float(self.metrics["achieved_h"])

    @property
    def profiles_path(self) -> Optional[Path]:
        """Profile override file carrying the calibrated values."""
        return self.table_path("profiles")


@dataclass
class AnalysisResults(_TableResults):
    """Results from the headway regression and capacity analysis."""

    @property
    def coefficients(self) -> dict[str, float]:
        return dict(self.metrics.get("coefficients", {}))

    @property
    def report_path(self) -> Optional[Path]:
        return self.table_path("regression_report")
