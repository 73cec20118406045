"""Reading matrices and writing versioned JSON documents."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from gmlab.errors import IoError

SCHEMA_VERSION = 1

__all__ = ["SCHEMA_VERSION", "dumps", "load_json", "read_matrix", "to_jsonable", "write_json"]


def _parse_csv(text, path):
    rows = []
    width = None
    for lineno, row in enumerate(csv.reader(text.splitlines()), start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        try:
            vals = [float(cell) for cell in row]
        except ValueError:
            if not rows and lineno == 1:
                continue  # header
            raise IoError("non-numeric entry", path, lineno) from None
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise IoError(f"expected {width} columns, found {len(vals)}", path, lineno)
        rows.append(vals)
    if not rows:
        raise IoError("no numeric rows", path)
    return np.array(rows)


def read_matrix(path, shape=None):
    """Matrix from CSV (row-major, optional header) or JSON array-of-arrays.

    ``shape`` is an optional ``(n, k)``; either entry may be None.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise IoError(str(exc.strerror or exc), str(path)) from exc
    if path.suffix.lower() == ".json" or text.lstrip().startswith("["):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise IoError(f"invalid JSON: {exc.msg}", str(path), exc.lineno) from exc
        if isinstance(data, dict):
            data = data.get("X", data.get("matrix"))
        try:
            M = np.array(data, dtype=float)
        except (TypeError, ValueError) as exc:
            raise IoError("JSON is not a numeric array of arrays", str(path)) from exc
        if M.ndim == 1:
            M = M[:, None]
        if M.ndim != 2:
            raise IoError("JSON is not a numeric array of arrays", str(path))
    else:
        M = _parse_csv(text, str(path))
    if shape is not None:
        for axis, want in enumerate(shape):
            if want is not None and M.shape[axis] != want:
                raise IoError(f"expected shape {tuple(shape)}, got {M.shape}", str(path))
    return M


def load_json(path):
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise IoError(str(exc.strerror or exc), str(path)) from exc
    except json.JSONDecodeError as exc:
        raise IoError(f"invalid JSON: {exc.msg}", str(path), exc.lineno) from exc


def to_jsonable(obj):
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def dumps(obj):
    """Deterministic JSON: sorted keys, shortest round-trip floats."""
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2, allow_nan=True) + "\n"


def write_json(obj, path):
    try:
        Path(path).write_text(dumps(obj))
    except OSError as exc:
        raise IoError(str(exc.strerror or exc), str(path)) from exc
