"""Tests for YAML loading and table writing."""

import json

import numpy as np
import pandas as pd
import pytest

from signalsmith.core.errors import ConfigurationError
from signalsmith.core.io import load_yaml, parse_yaml, save_dataframe, save_json, save_yaml

DOCUMENT = """\
scenario_id: base
shares:
  HV: 0.5
  CV: 0.5
plan:
  phases:
    - {groups: [EB_T], green: 30}
    - {groups: [NB_T], green: 25}
"""


def test_parse_yaml_indexes_lines():
    document = parse_yaml(DOCUMENT)
    assert document.data["shares"]["CV"] == 0.5
    assert document.line_of(("shares",)) == 2
    assert document.line_of(("shares", "CV")) == 4
    assert document.line_of(("plan", "phases", 1)) == 8
    # unknown leaves fall back to their nearest known ancestor
    assert document.line_of(("plan", "phases", 1, "amber")) == 8
    assert document.line_of(("missing",)) is None


def test_invalid_yaml_reports_line():
    with pytest.raises(ConfigurationError, match="Invalid YAML") as err:
        parse_yaml("scenario_id: base\nshares: {HV: 1.0\nseed: 3\n")
    assert err.value.line is not None


def test_empty_document_is_empty_mapping():
    assert parse_yaml("").data == {}


def test_load_yaml_missing_file(tmp_path):
    with pytest.raises(ConfigurationError, match="not found"):
        load_yaml(tmp_path / "nope.yaml")


def test_load_yaml_keeps_path(tmp_path):
    path = tmp_path / "scenario.yaml"
    path.write_text(DOCUMENT)
    document = load_yaml(path)
    assert document.path == path
    assert document.data["scenario_id"] == "base"


def test_save_dataframe_csv(tmp_path):
    frame = pd.DataFrame({"h_s": [1.0 / 3.0, 2.0], "lane_group": ["EB_T", "EB_L"]})
    path = save_dataframe(frame, tmp_path / "nested" / "results.csv")
    text = path.read_text()
    assert text.splitlines() == ["h_s,lane_group", "0.333333,EB_T", "2,EB_L"]
    assert "\r\n" not in text


def test_save_dataframe_json(tmp_path):
    path = save_dataframe(pd.DataFrame({"a": [1, 2]}), tmp_path / "t.json", format="json")
    assert json.loads(path.read_text()) == [{"a": 1}, {"a": 2}]


def test_save_dataframe_unknown_format(tmp_path):
    with pytest.raises(ValueError, match="Unsupported output format"):
        save_dataframe(pd.DataFrame({"a": [1]}), tmp_path / "t.parquet", format="parquet")


def test_save_json_handles_numpy(tmp_path):
    path = save_json({"n": np.int64(3), "h": np.float64(1.5), "dir": tmp_path}, tmp_path / "m.json")
    loaded = json.loads(path.read_text())
    assert loaded["n"] == 3 and loaded["h"] == 1.5
    assert loaded["dir"] == str(tmp_path)


def test_save_yaml_round_trip(tmp_path):
    path = save_yaml({"HV": {"cc0": 1.25, "cc1": 1.1}}, tmp_path / "profiles.yaml")
    assert load_yaml(path).data == {"HV": {"cc0": 1.25, "cc1": 1.1}}
