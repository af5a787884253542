"""Core domain objects, simulation engine, measurement and analysis."""

from signalsmith.core.contracts import (
    AmberMode,
    Approach,
    Columns,
    DatasetSpec,
    Decision,
    Fleet,
    Indication,
    LaneType,
    Movement,
)
from signalsmith.core.driver_model import DriverProfile, builtin_profile, builtin_profiles
from signalsmith.core.scenario import LaneSpec, Scenario, default_plan, default_testbed
from signalsmith.core.signal_advisory import Phase, SignalPlan

__all__ = [
    "AmberMode",
    "Approach",
    "Columns",
    "DatasetSpec",
    "Decision",
    "DriverProfile",
    "Fleet",
    "Indication",
    "LaneSpec",
    "LaneType",
    "Movement",
    "Phase",
    "Scenario",
    "SignalPlan",
    "builtin_profile",
    "builtin_profiles",
    "default_plan",
    "default_testbed",
]
