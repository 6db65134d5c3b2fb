"""Deterministic JSON output with every float written at 17 significant digits."""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

SCHEMA = "fracheat.control-report"
SCHEMA_VERSION = 1

__all__ = ["SCHEMA", "SCHEMA_VERSION", "dumps", "write_json", "read_json"]


def _scalar(v) -> str:
    if v is None:
        return "null"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if not math.isfinite(v):
            raise ValueError("non-finite numbers cannot be written to a report")
        text = f"{v:.17g}"
        return text if any(c in text for c in ".en") else text + ".0"
    if isinstance(v, str):
        return json.dumps(v)
    raise TypeError(f"cannot serialise {type(v).__name__}")


def _dump(obj, indent: int) -> str:
    pad = "  " * indent
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}  {json.dumps(str(k))}: {_dump(v, indent + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if any(isinstance(v, (list, tuple, dict, np.ndarray)) for v in obj):
            items = [f"{pad}  {_dump(v, indent + 1)}" for v in obj]
            return "[\n" + ",\n".join(items) + "\n" + pad + "]"
        return "[" + ", ".join(_scalar(v) for v in obj) + "]"
    return _scalar(obj)


def dumps(obj) -> str:
    """JSON text; dict order is kept, arrays of scalars stay on one line."""
    return _dump(obj, 0) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj))


def read_json(path):
    return json.loads(Path(path).read_text())
