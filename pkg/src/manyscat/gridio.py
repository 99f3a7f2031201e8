"""File formats: atomic writes, fixed-precision CSV, and the JSON grid file.

Grid files hold ``{"dims": [nx, ny, nz], "box": {"min": [...], "max": [...]},
"values": [...]}`` with values flattened row-major, x fastest.
"""
from __future__ import annotations

import json
import os
import tempfile

import numpy as np

from .ensemble import Box
from .errors import ValidationError


def fmt(x) -> str:
    return format(float(x), ".17g")


def atomic_write_text(path, text):
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        obj = float(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def atomic_write_json(path, obj):
    atomic_write_text(path, json.dumps(_jsonable(obj), indent=2, sort_keys=False) + "\n")


def complex_columns(names, values):
    """Split complex columns into Re/Im pairs: returns (header, real array)."""
    values = np.asarray(values)
    header = []
    cols = []
    for i, name in enumerate(names):
        header += [f"re_{name}", f"im_{name}"]
        cols += [values[:, i].real, values[:, i].imag]
    return header, np.column_stack(cols) if cols else np.zeros((len(values), 0))


def csv_text(header, rows) -> str:
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.size == 0:
        rows = rows.reshape(0, len(header))
    if rows.shape[1] != len(header):
        raise ValueError(f"{rows.shape[1]} columns for {len(header)} header fields")
    lines = [",".join(header)]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def write_csv(path, header, rows):
    atomic_write_text(path, csv_text(header, rows))


def vector_field_csv(path, points, values, name="E"):
    """CSV with columns x, y, z and Re/Im of each component of a complex 3-vector."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    vals = np.asarray(values, dtype=complex).reshape(-1, 3)
    h, cols = complex_columns([f"{name}{c}" for c in "xyz"], vals)
    write_csv(path, ["x", "y", "z"] + h, np.column_stack([pts, cols]))


def grid_to_dict(box: Box, values) -> dict:
    values = np.asarray(values, dtype=float)
    return {
        "dims": list(values.shape),
        "box": {"min": list(box.lo), "max": list(box.hi)},
        "values": values.ravel(order="F").tolist(),
    }


def grid_from_dict(obj, where="grid"):
    """Parse a grid dictionary into ``(Box, values[ix, iy, iz])``."""
    try:
        dims = [int(n) for n in obj["dims"]]
        lo = [float(v) for v in obj["box"]["min"]]
        hi = [float(v) for v in obj["box"]["max"]]
        flat = np.asarray(obj["values"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"{where}: expected dims, box.min, box.max and values ({exc})") from None
    if len(dims) != 3 or min(dims) < 1:
        raise ValidationError(f"{where}.dims: need three positive integers")
    if flat.size != int(np.prod(dims)):
        raise ValidationError(f"{where}.values: {flat.size} values for dims {dims}")
    if len(lo) != 3 or len(hi) != 3:
        raise ValidationError(f"{where}.box: min and max need three coordinates")
    return Box(tuple(lo), tuple(hi)), flat.reshape(dims, order="F")


def read_grid(path):
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return grid_from_dict(obj, where=os.path.basename(os.fspath(path)))


def write_grid(path, box: Box, values):
    atomic_write_json(path, grid_to_dict(box, values))
