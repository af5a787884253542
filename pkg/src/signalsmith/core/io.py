"""I/O utilities for loading configs and saving result tables."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
import pandas as pd
import yaml

from signalsmith.core.errors import ConfigurationError

PathLike = Union[str, Path]
FLOAT_FORMAT = "%.6g"


@dataclass
class YamlDocument:
    """Parsed YAML plus the source line of every key, keyed by path tuple."""

    data: Any
    path: Optional[Path] = None
    lines: dict[tuple[Union[str, int], ...], int] = field(default_factory=dict)

    def line_of(self, location: tuple[Union[str, int], ...]) -> Optional[int]:
        """Line of the deepest known ancestor of ``location``."""
        location = tuple(location)
        while location:
            if location in self.lines:
                return self.lines[location]
            location = location[:-1]
        return None


def _index_lines(node: yaml.Node, prefix: tuple, lines: dict) -> None:
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            key = (*prefix, key_node.value)
            lines[key] = key_node.start_mark.line + 1
            _index_lines(value_node, key, lines)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            key = (*prefix, i)
            lines[key] = item.start_mark.line + 1
            _index_lines(item, key, lines)


def parse_yaml(text: str, path: Optional[PathLike] = None) -> YamlDocument:
    """Parse YAML text, keeping a key-to-line index for error reporting.

    Raises:
        ConfigurationError: syntax error, reported at the parser's line
    """
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        problem = getattr(e, "problem", None) or str(e)
        raise ConfigurationError(f"Invalid YAML in {path or '<string>'}: {problem}", line=line) from e
    lines: dict = {}
    if node is not None:
        _index_lines(node, (), lines)
    return YamlDocument(data=data if data is not None else {}, path=Path(path) if path else None, lines=lines)


def load_yaml(path: PathLike) -> YamlDocument:
    """Load a YAML file into a YamlDocument."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"Config file not found: {path}")
    return parse_yaml(path.read_text(encoding="utf-8"), path=path)


def load_csv(path: PathLike, **kwargs: Any) -> pd.DataFrame:
    """Load CSV file.

    Args:
        path: Path to CSV file
        **kwargs: Additional arguments passed to pd.read_csv

    Returns:
        DataFrame with loaded data
    """
    return pd.read_csv(path, **kwargs)


def save_dataframe(
    df: pd.DataFrame,
    path: PathLike,
    format: str = "csv",
    **kwargs: Any,
) -> Path:
    """Save DataFrame to file.

    CSV output is UTF-8 with a header row and floats at six significant digits.

    Args:
        df: DataFrame to save
        path: Output path
        format: File format ('csv' or 'json')
        **kwargs: Additional arguments passed to save function
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    save_funcs = {
        "csv": lambda: df.to_csv(
            path, index=False, float_format=FLOAT_FORMAT, encoding="utf-8", lineterminator="\n", **kwargs
        ),
        "json": lambda: df.to_json(path, orient="records", **kwargs),
    }

    save_func = save_funcs.get(format)
    if save_func is None:
        raise ValueError(f"Unsupported output format: {format}")
    save_func()
    return path


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def save_json(data: dict[str, Any], path: PathLike) -> Path:
    """Save dictionary to JSON file.

    Args:
        data: Dictionary to save
        path: Output path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, default=_jsonable)
    return path


def save_yaml(data: dict[str, Any], path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(data, f, sort_keys=False)
    return path
