"""Define canonical column names, enums and schema checks.

This module defines the shared vocabulary of the package: fleet and movement
enums, the fixed column names of every CSV artifact, and the dataset specs
used to validate results files before analysis.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

from signalsmith.core.errors import MissingColumnsError


class Fleet(str, Enum):
    """Vehicle fleet types by connectivity and automation level."""

    HV = "HV"
    CV = "CV"
    AV = "AV"
    CAV = "CAV"

    @classmethod
    def parse(cls, value: Any) -> "Fleet":
        """Accept a member or a case-insensitive fleet name."""
        if isinstance(value, cls):
            return value
        return cls(str(value).upper())

    @property
    def code(self) -> int:
        return FLEET_ORDER.index(self)


FLEET_ORDER: tuple[Fleet, ...] = (Fleet.HV, Fleet.CV, Fleet.AV, Fleet.CAV)


class Approach(str, Enum):
    """Intersection approaches, named by travel direction."""

    EB = "EB"
    WB = "WB"
    NB = "NB"
    SB = "SB"


APPROACH_ORDER: tuple[Approach, ...] = (Approach.EB, Approach.WB, Approach.NB, Approach.SB)


class Movement(str, Enum):
    """Turning movements at the stop bar."""

    LEFT = "Left"
    THROUGH = "Through"
    RIGHT = "Right"

    @property
    def code(self) -> int:
        return MOVEMENT_ORDER.index(self)

    @property
    def is_turn(self) -> bool:
        return self is not Movement.THROUGH


MOVEMENT_ORDER: tuple[Movement, ...] = (Movement.LEFT, Movement.THROUGH, Movement.RIGHT)


class Indication(str, Enum):
    """Signal indication shown to a movement group."""

    GREEN = "Green"
    AMBER = "Amber"
    RED = "Red"


class Decision(str, Enum):
    """Stop/go decision at the stop bar."""

    PROCEED = "Proceed"
    STOP = "Stop"


class AmberMode(str, Enum):
    """How a driver evaluates an amber indication."""

    CONTINUOUS_CHECK = "ContinuousCheck"
    ONE_DECISION = "OneDecision"


class LaneType(str, Enum):
    """Lane group configuration used as regression indicators."""

    EXCLUSIVE_LEFT = "exclusive_left"
    EXCLUSIVE_THROUGH = "exclusive_through"
    EXCLUSIVE_RIGHT = "exclusive_right"
    SHARED_THROUGH_RIGHT = "shared_through_right"
    INTERSECTION = "intersection"


# Canonical column names for the CSV artifacts
class Columns:
    """Canonical column name constants."""

    # Keys
    SCENARIO_ID = "scenario_id"
    SEED = "seed"
    LANE_GROUP = "lane_group"
    LANE_ID = "lane_id"
    APPROACH = "approach"
    LANE_TYPE = "lane_type"
    PERIOD = "period"

    # Shares
    HV = "hv"
    CV = "cv"
    AV = "av"
    CAV = "cav"

    # Regression indicators
    D_EXL = "d_exl"
    D_EXR = "d_exr"
    D_SHTR = "d_shtr"
    D_SHTR_RT = "d_shtr_rt"
    RT = "rt"

    # Measures
    H_S = "h_s"
    N_QUEUES = "n_queues"
    LOW_SAMPLE = "low_sample"
    DELAY = "delay"
    TRAVEL_TIME = "travel_time"
    QUEUE_LENGTH = "queue_length"
    THROUGHPUT = "throughput"
    STOPS = "stops"

    # Vehicle records
    VEHICLE_ID = "vehicle_id"
    FLEET = "fleet"
    MOVEMENT = "movement"
    ENTRY_TIME = "entry_time"
    INSERT_TIME = "insert_time"
    CROSSING_TIME = "crossing_time"
    EXIT_TIME = "exit_time"
    DESIRED_SPEED = "desired_speed"
    FREE_FLOW_TIME = "free_flow_time"
    COMPLETE = "complete"

    # Trajectories and events
    TIME = "t"
    POSITION = "position"
    SPEED = "speed"
    EVENT = "event"
    INDICATION = "indication"
    GROUP = "group"


RESULTS_COLUMNS: list[str] = [
    Columns.SCENARIO_ID,
    Columns.SEED,
    Columns.LANE_GROUP,
    Columns.APPROACH,
    Columns.LANE_TYPE,
    Columns.HV,
    Columns.CV,
    Columns.AV,
    Columns.CAV,
    Columns.D_EXL,
    Columns.D_EXR,
    Columns.D_SHTR,
    Columns.RT,
    Columns.H_S,
    Columns.N_QUEUES,
    Columns.LOW_SAMPLE,
    Columns.DELAY,
    Columns.TRAVEL_TIME,
    Columns.QUEUE_LENGTH,
    Columns.THROUGHPUT,
    Columns.STOPS,
]


@dataclass
class DatasetSpec:
    """Specification for a dataset schema and requirements."""

    name: str
    required_columns: list[str]
    optional_columns: list[str] = field(default_factory=list)
    id_column: Optional[str] = None
    metadata: dict[str, Any] = field(default_factory=dict)

    def validate(self, df_columns: set[str]) -> list[str]:
        """Validate that a DataFrame has required columns.

        Args:
            df_columns: Set of column names in the DataFrame

        Returns:
            List of missing required columns
        """
        missing = set(self.required_columns) - df_columns
        return sorted(missing)


RESULTS_SPEC = DatasetSpec(
    name="results",
    required_columns=[
        Columns.SCENARIO_ID,
        Columns.SEED,
        Columns.LANE_GROUP,
        Columns.LANE_TYPE,
        Columns.CV,
        Columns.AV,
        Columns.CAV,
        Columns.D_EXL,
        Columns.D_EXR,
        Columns.D_SHTR,
        Columns.RT,
        Columns.H_S,
    ],
    optional_columns=[Columns.HV, Columns.DELAY, Columns.THROUGHPUT],
    id_column=Columns.SCENARIO_ID,
)


def validate_schema(df_columns: set[str], spec: DatasetSpec) -> None:
    """Validate DataFrame schema against a DatasetSpec.

    Args:
        df_columns: Set of column names in the DataFrame
        spec: DatasetSpec to validate against

    Raises:
        MissingColumnsError: If required columns are missing
    """
    missing = spec.validate(df_columns)
    if missing:
        raise MissingColumnsError(
            f"Missing required columns for {spec.name}: {', '.join(missing)}",
            columns=missing,
        )
