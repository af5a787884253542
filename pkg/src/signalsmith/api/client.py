"""Define SignalSmithClient with one method per command.

This module provides the stable public API for SignalSmith.
"""

from signalsmith.api.config import AnalysisConfig, CalibrationConfig, RunConfig, SweepConfig
from signalsmith.api.results import AnalysisResults, CalibrationResults, RunResults, SweepResults
from signalsmith.core.pipelines import (
    run_analysis_pipeline,
    run_calibration_pipeline,
    run_run_pipeline,
    run_sweep_pipeline,
)


class SignalSmithClient:
    """Client for running SignalSmith pipelines.

    Each method takes a validated config, converts it to a core job and
    returns the written artifacts.
    """

    def run(self, config: RunConfig) -> RunResults:
        """Run one replication.

        Args:
            config: Scenario path, seed and output directory

        Returns:
            Results with metrics and table paths
        """
        results = run_run_pipeline(config.to_core_config())
        return RunResults(
            metrics=results.metrics,
            output_dir=results.output_dir,
            tables=results.tables,
            metadata=results.metadata,
        )

    def sweep(self, config: SweepConfig) -> SweepResults:
        """Run every share combination for every seed and merge the results."""
        results = run_sweep_pipeline(config.to_core_config())
        return SweepResults(
            metrics=results.metrics,
            output_dir=results.output_dir,
            tables=results.tables,
            metadata=results.metadata,
        )

    def calibrate(self, config: CalibrationConfig) -> CalibrationResults:
        results = run_calibration_pipeline(config.to_core_config())
        return CalibrationResults(
            metrics=results.metrics,
            output_dir=results.output_dir,
            tables=results.tables,
            metadata=results.metadata,
        )

    def analyze(self, config: AnalysisConfig) -> AnalysisResults:
        """Fit the headway regression and write CAF, grid and capacity tables."""
        results = run_analysis_pipeline(config.to_core_config())
        return AnalysisResults(
            metrics=results.metrics,
            output_dir=results.output_dir,
            tables=results.tables,
            metadata=results.metadata,
        )
