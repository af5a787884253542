"""Tests for core contracts module."""

import pytest

from signalsmith.core.contracts import (
    FLEET_ORDER,
    RESULTS_COLUMNS,
    RESULTS_SPEC,
    Columns,
    DatasetSpec,
    Fleet,
    LaneType,
    Movement,
    validate_schema,
)
from signalsmith.core.errors import ConfigurationError, MissingColumnsError, StateCorruptionError, SweepError


def test_columns_constants():
    """Test that column constants are defined."""
    assert Columns.H_S == "h_s"
    assert Columns.D_SHTR_RT == "d_shtr_rt"
    assert [Columns.HV, Columns.CV, Columns.AV, Columns.CAV] == [f.value.lower() for f in FLEET_ORDER]


def test_results_columns_cover_schema():
    assert set(RESULTS_SPEC.required_columns) <= set(RESULTS_COLUMNS)
    assert RESULTS_COLUMNS[:3] == [Columns.SCENARIO_ID, Columns.SEED, Columns.LANE_GROUP]


def test_dataset_spec_validation():
    """Test DatasetSpec validation."""
    spec = DatasetSpec(
        name="test",
        required_columns=["col1", "col2"],
        optional_columns=["col3"],
    )

    # Valid schema
    assert spec.validate({"col1", "col2", "col3", "col4"}) == []

    # Missing required column
    assert spec.validate({"col1"}) == ["col2"]


def test_validate_schema():
    """Test validate_schema function."""
    spec = DatasetSpec(name="test", required_columns=["col1", "col2"])

    validate_schema({"col1", "col2", "col3"}, spec)

    with pytest.raises(MissingColumnsError, match="Missing required columns") as err:
        validate_schema({"col1"}, spec)
    assert err.value.columns == ["col2"]
    # still a ValueError for callers that catch broadly
    assert isinstance(err.value, ValueError)


def test_enum_codes():
    assert [f.code for f in FLEET_ORDER] == [0, 1, 2, 3]
    assert Fleet("CAV") is Fleet.CAV
    assert Movement.LEFT.is_turn and Movement.RIGHT.is_turn
    assert not Movement.THROUGH.is_turn
    assert LaneType("shared_through_right") is LaneType.SHARED_THROUGH_RIGHT


def test_configuration_error_carries_line():
    error = ConfigurationError("shares must sum to 1", line=4, field="shares")
    assert str(error) == "line 4: shares must sum to 1"
    assert error.field == "shares"
    assert str(ConfigurationError("bad")) == "bad"


def test_state_corruption_and_sweep_errors():
    error = StateCorruptionError("overlap", {"t": 1.5, "gap": -0.1})
    assert "t=1.5" in str(error) and "gap=-0.1" in str(error)

    wrapped = SweepError("S03", 7, error)
    assert wrapped.cause is error
    assert "S03" in str(wrapped) and "seed 7" in str(wrapped)


def test_fleet_parse():
    assert Fleet.parse(Fleet.CAV) is Fleet.CAV
    assert Fleet.parse("cv") is Fleet.CV
    assert Fleet.parse("AV") is Fleet.AV
    with pytest.raises(ValueError):
        Fleet.parse("truck")
