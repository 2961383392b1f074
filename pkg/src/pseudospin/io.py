"""CSV/JSON persistence with content hashes."""
from __future__ import annotations

import hashlib
import io
import json
from pathlib import Path

import numpy as np


def csv_bytes(header, columns) -> bytes:
    """Render equal-length columns as CSV with round-trip float precision."""
    cols = [np.asarray(c, dtype=float) for c in columns]
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in zip(*cols):
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue().encode()


def matrix_csv_bytes(matrix) -> bytes:
    buf = io.StringIO()
    for row in np.asarray(matrix, dtype=float):
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue().encode()


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def write_bytes(path, data: bytes) -> str:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    return sha256(data)


def write_json(path, obj) -> str:
    return write_bytes(path, (json.dumps(obj, indent=2, sort_keys=True, default=_default)
                              + "\n").encode())


def read_csv(path):
    """Return (header, 2-D float array)."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def _default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")
