"""Line-delimited record files with a versioned header.

The first line is a header object ``{"schema": ..., "version": ..., ...}``;
every following line is one record. Floats are written with 17 significant
digits so a load followed by a save reproduces the file byte for byte.
"""

import json
import math
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Tuple

import numpy as np

from .errors import SchemaVersionError


def _format_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    text = format(x, ".17g")
    if "." not in text and "e" not in text:
        text += ".0"
    return text


def dumps(obj: Any) -> str:
    """Compact JSON text with fixed float formatting."""
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _format_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, Enum):
        return dumps(obj.value)
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist())
    if isinstance(obj, dict):
        return "{" + ",".join(f"{json.dumps(str(k))}:{dumps(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(dumps(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_records(path: Path, header: Dict[str, Any], records: Iterable[Dict[str, Any]]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(dumps(header) + "\n")
        for record in records:
            f.write(dumps(record) + "\n")


def read_records(path: Path, schema: str, version: int) -> Tuple[Dict[str, Any], List[Dict[str, Any]]]:
    """Read a record file, checking its schema name and version before any record."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        lines = [line for line in f.read().splitlines() if line.strip()]
    if not lines:
        raise SchemaVersionError(f"{path} is empty, expected a '{schema}' header")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise SchemaVersionError(f"{path} has no readable header: {e}") from e
    if not isinstance(header, dict) or header.get("schema") != schema:
        raise SchemaVersionError(f"{path} is not a '{schema}' file")
    if header.get("version") != version:
        raise SchemaVersionError(
            f"{path} has {schema} version {header.get('version')}, expected {version}"
        )
    return header, [json.loads(line) for line in lines[1:]]
