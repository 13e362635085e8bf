"""Output files and their readers.

Path dumps are raw little-endian binaries: a header of four int64 values
``M, N, n, d`` followed by the array as row-major float64.  A process on the
time grid has shape (M, N+1, n) and Z has shape (M, N, n, d); the header
records N as the grid step count in both cases and d is the Brownian
dimension.  The reader infers the layout from the file size, or from
``kind`` when both layouts fit.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

__all__ = [
    "HISTORY_FIELDS",
    "write_json",
    "read_json",
    "write_history",
    "read_history",
    "write_gap_table",
    "read_gap_table",
    "write_paths",
    "read_paths",
]

_HEADER = np.dtype("<i8")
_DATA = np.dtype("<f8")

HISTORY_FIELDS = (
    "k",
    "supdiff_X",
    "supdiff_Y",
    "Y0_mean",
    "eps_mono",
    "Y_mono",
    "X_mono",
    "Y_upper",
    "X_upper",
    "Y_lower",
)


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def write_json(path: str | Path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")
    return path


def read_json(path: str | Path):
    return json.loads(Path(path).read_text())


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def write_history(path: str | Path, history: list[dict]) -> Path:
    """One row per outer iterate; violation columns hold fractions."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_FIELDS)
        for h in history:
            row = []
            for key in HISTORY_FIELDS:
                v = h[key]
                row.append(_fmt(v["fraction"] if isinstance(v, dict) else v))
            w.writerow(row)
    return path


def read_history(path: str | Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (int(v) if k == "k" else float(v)) for k, v in r.items()} for r in rows]


def write_gap_table(path: str | Path, table: list[dict]) -> Path:
    path = Path(path)
    fields = list(table[0]) if table else ["node"]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in table:
            w.writerow([_fmt(r[k]) for k in fields])
    return path


def read_gap_table(path: str | Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (int(v) if k == "node" else float(v)) for k, v in r.items()} for r in rows]


def write_paths(path: str | Path, arr: np.ndarray, steps: int, d: int = 1) -> Path:
    """Dump (M, N+1, n) or (M, N, n, d) as header + row-major doubles."""
    arr = np.ascontiguousarray(arr, dtype=_DATA)
    if arr.ndim == 3:
        M, _, n = arr.shape
    elif arr.ndim == 4:
        M, _, n, d = arr.shape
    else:
        raise ValueError(f"cannot dump an array of shape {arr.shape}")
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(np.array([M, steps, n, d], dtype=_HEADER).tobytes())
        fh.write(arr.tobytes(order="C"))
    return path


def read_paths(path: str | Path, kind: str | None = None) -> np.ndarray:
    """Inverse of :func:`write_paths`; ``kind`` is "process" or "z"."""
    raw = Path(path).read_bytes()
    if len(raw) < 32:
        raise ValueError("truncated path dump header")
    M, N, n, d = (int(v) for v in np.frombuffer(raw[:32], dtype=_HEADER))
    data = np.frombuffer(raw[32:], dtype=_DATA)
    fits = {"process": data.size == M * (N + 1) * n, "z": data.size == M * N * n * d}
    if kind is None:
        if all(fits.values()):
            raise ValueError("dump layout is ambiguous; pass kind='process' or kind='z'")
        kind = "process" if fits["process"] else "z"
    if fits.get(kind):
        shape = (M, N + 1, n) if kind == "process" else (M, N, n, d)
        return data.reshape(shape).copy()
    raise ValueError(f"dump holds {data.size} values, inconsistent with header {(M, N, n, d)}")
