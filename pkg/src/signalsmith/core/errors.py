"""Exception types raised by signalsmith."""

from typing import Any, Optional


class SignalSmithError(Exception):
    """Base class for all signalsmith errors."""


class ConfigurationError(SignalSmithError, ValueError):
    """Invalid or malformed configuration."""

    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        self.line = line
        self.field = field
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{prefix}{message}")


class StateCorruptionError(SignalSmithError, RuntimeError):
    """Engine invariant breach (negative gap, overlap after integration)."""

    def __init__(self, message: str, diagnostics: Optional[dict[str, Any]] = None):
        self.diagnostics = diagnostics or {}
        details = ", ".join(f"{k}={v}" for k, v in self.diagnostics.items())
        super().__init__(f"{message} ({details})" if details else message)


class SingularDesignError(SignalSmithError, ValueError):
    """Regression design matrix is rank deficient or too small."""


class CalibrationError(SignalSmithError, RuntimeError):
    """No calibration grid point produced a valid headway."""


class SweepError(SignalSmithError, RuntimeError):
    """A replication inside a sweep failed."""

    def __init__(self, scenario_id: str, seed: int, cause: BaseException):
        # args must match the constructor for the error to unpickle
        super().__init__(scenario_id, seed, cause)
        self.scenario_id = scenario_id
        self.seed = seed
        self.cause = cause

    def __str__(self) -> str:
        return f"Run failed for scenario {self.scenario_id}, seed {self.seed}: {self.cause}"


class MissingColumnsError(SignalSmithError, ValueError):
    """A dataset lacks required columns."""

    def __init__(self, message: str, columns: Optional[list[str]] = None):
        self.columns = columns or []
        super().__init__(message)
