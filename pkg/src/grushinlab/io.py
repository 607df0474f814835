"""File formats: grid-function snapshots, trace CSVs, deterministic JSON.

Binary snapshot layout (little-endian): ``nx, ny`` as int64, ``Lx, Ly`` as
float64, then ``nx * ny`` float64 values in row-major ``(x, y)`` order.
"""
from __future__ import annotations

import csv
import json
import math
import struct
from fractions import Fraction
from pathlib import Path
from typing import Iterable, List, Sequence

import numpy as np

from .semigroup import GridFunction, GridSpec

_HEADER = struct.Struct("<qqdd")


def write_grid_function(path, u: GridFunction) -> None:
    s = u.spec
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(s.nx, s.ny, s.x_half_width, s.y_half_width))
        fh.write(np.ascontiguousarray(u.values, dtype="<f8").tobytes())


def read_grid_function(path) -> GridFunction:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    nx, ny, lx, ly = _HEADER.unpack_from(data)
    body = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    if body.size != nx * ny:
        raise ValueError(f"{path}: expected {nx * ny} values, found {body.size}")
    return GridFunction(GridSpec(lx, ly, int(nx), int(ny)), body.reshape(nx, ny).astype(float))


def write_grid_function_csv(path, u: GridFunction) -> None:
    """Long format ``x, y, value``."""
    X, Y = u.spec.mesh()
    write_csv(path, ["x", "y", "value"],
              zip(X.ravel(), Y.ravel(), np.asarray(u.values).ravel()))


def fmt(v) -> str:
    """17 significant digits; infinities and NaN as ``inf``/``-inf``/``nan``."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".17g")


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([c if isinstance(c, str) else fmt(c) for c in row])


def read_csv(path) -> List[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_trace_csv(path, trace) -> None:
    rows = []
    for t, s, lq, wn in zip(trace.times, trace.sup_norms, trace.lq_norms, trace.weighted_norms):
        rows.append([t, s, lq, wn[0], wn[1], trace.status])
    write_csv(path, ["t", "sup_norm", "lq_norm", "weighted_norm_1", "weighted_norm_2", "status"], rows)


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if isinstance(obj, str):
        return _quote(obj)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating, Fraction)):
        v = float(obj)
        # JSON has no infinity literal
        return _quote(fmt(v)) if not math.isfinite(v) else fmt(v)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{_quote(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return _quote(obj.value)
    raise TypeError(f"cannot encode {type(obj).__name__}")


def _quote(s: str) -> str:
    return json.dumps(s)


def dumps(obj, indent: int = 2) -> str:
    """Deterministic JSON: insertion-ordered keys, 17-digit floats, ``"inf"`` markers."""
    return _encode(obj, indent, 0) + "\n"
