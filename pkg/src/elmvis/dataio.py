"""Matrix files, row normalisation, input layouts and reproducible shuffles.

Two on-disk formats are supported:

csv
    Headerless, comma separated decimals, one matrix row per line.
raw-f64
    Two little-endian uint64 (rows, cols) followed by rows*cols
    little-endian float64 values in row-major order.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
import os
import struct
from typing import Literal

import numpy as np

Format = Literal["csv", "raw-f64"]
LayoutKind = Literal["grid", "normal", "uniform"]


class ParseError(ValueError):
    """Malformed matrix file; ``line`` and ``column`` are 1-based when known."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + message)
        self.line = line
        self.column = column


class DataError(ValueError):
    pass


def guess_format(path) -> Format:
    ext = os.path.splitext(str(path))[1].lower()
    return "raw-f64" if ext in (".bin", ".f64", ".raw") else "csv"


def _load_csv(path) -> np.ndarray:
    rows: list[list[float]] = []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ParseError(f"expected {width} values, found {len(row)}", lineno)
            values = []
            for col, token in enumerate(row, start=1):
                try:
                    value = float(token)
                except ValueError:
                    raise ParseError(f"non-numeric token {token.strip()!r}", lineno, col) from None
                if not math.isfinite(value):
                    raise ParseError(f"non-finite value {token.strip()!r}", lineno, col)
                values.append(value)
            rows.append(values)
    if not rows:
        return np.empty((0, 0))
    return np.array(rows, dtype=np.float64)


def _load_raw(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16:
        raise ParseError("file too short for the 16-byte shape header")
    rows, cols = struct.unpack("<QQ", blob[:16])
    expected = 16 + 8 * rows * cols
    if len(blob) != expected:
        raise ParseError(f"header declares {rows}x{cols} ({expected} bytes), file has {len(blob)}")
    data = np.frombuffer(blob, dtype="<f8", offset=16).reshape(rows, cols).astype(np.float64)
    bad = np.argwhere(~np.isfinite(data))
    if bad.size:
        r, c = bad[0]
        raise ParseError("non-finite value", int(r) + 1, int(c) + 1)
    return data


def load_matrix(path, fmt: Format | None = None) -> np.ndarray:
    fmt = fmt or guess_format(path)
    if fmt == "csv":
        return _load_csv(path)
    if fmt == "raw-f64":
        return _load_raw(path)
    raise ValueError(f"unknown matrix format {fmt!r}")


def save_matrix(path, M, fmt: Format | None = None) -> None:
    """Write a matrix so that :func:`load_matrix` reproduces it bitwise."""
    M = np.asarray(M, dtype=np.float64)
    if M.ndim == 1:
        M = M.reshape(-1, 1)
    fmt = fmt or guess_format(path)
    if fmt == "csv":
        # 17 significant digits round-trip every float64 exactly
        with open(path, "w") as fh:
            for row in M:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    elif fmt == "raw-f64":
        with open(path, "wb") as fh:
            fh.write(struct.pack("<QQ", *M.shape))
            fh.write(M.astype("<f8").tobytes(order="C"))
    else:
        raise ValueError(f"unknown matrix format {fmt!r}")


def normalize_rows(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(X, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise DataError(f"row {zero[0]} has zero norm and cannot be normalised")
    return X / norms[:, None]


def one_hot(labels, n_classes: int | None = None) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and labels.min() < 0:
        raise ValueError("labels must be non-negative")
    if n_classes is None:
        n_classes = int(labels.max()) + 1 if labels.size else 0
    if labels.size and labels.max() >= n_classes:
        raise ValueError(f"label {labels.max()} >= n_classes={n_classes}")
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def _grid_side(n: int, dims: int) -> int:
    side = 1
    while side ** dims < n:
        side += 1
    return side


def make_layout(kind: LayoutKind, n: int, dims: int = 2, extent: float = 1.0,
                seed: int = 0) -> np.ndarray:
    """Fixed input points: a regular grid, or normal/uniform random points.

    The grid is the smallest one with at least ``n`` points, spanning
    ``[-extent, extent]`` per axis, listed in row-major order and truncated.
    Normal points use ``extent`` as their standard deviation.
    """
    if n < 1 or dims < 1:
        raise ValueError("n and dims must be >= 1")
    if kind == "grid":
        side = _grid_side(n, dims)
        axis = np.linspace(-extent, extent, side) if side > 1 else np.zeros(1)
        points = itertools.islice(itertools.product(axis, repeat=dims), n)
        return np.array(list(points), dtype=np.float64)
    rng = np.random.default_rng(seed)
    if kind == "normal":
        return extent * rng.standard_normal((n, dims))
    if kind == "uniform":
        return rng.uniform(-extent, extent, size=(n, dims))
    raise ValueError(f"unknown layout {kind!r}")


def shuffle_rows(X, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Shuffle rows; returns ``(X[perm], perm)``."""
    X = np.asarray(X)
    perm = np.random.default_rng(seed).permutation(X.shape[0])
    return X[perm], perm


def load_labels(path) -> np.ndarray:
    M = load_matrix(path)
    if M.ndim != 2 or (M.size and M.shape[1] != 1):
        raise ParseError("label file must have exactly one column")
    labels = M.reshape(-1)
    if not np.all(labels == np.round(labels)):
        raise ParseError("labels must be integers")
    return labels.astype(np.int64)


def load_pairs(path) -> list[tuple[int, int]]:
    """Seed pairs file: CSV rows ``v_index,x_index``; a text header is allowed."""
    pairs = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if len(row) != 2:
                raise ParseError(f"expected 2 values, found {len(row)}", lineno)
            try:
                pairs.append((int(row[0]), int(row[1])))
            except ValueError:
                if lineno == 1:
                    continue
                raise ParseError(f"non-integer pair {row!r}", lineno) from None
    return pairs


def dumps_json(obj, indent: int | None = 2, _level: int = 0) -> str:
    """JSON with insertion key order and floats at 17 significant digits.

    ``indent=None`` gives a single line (for JSON-lines output).
    """
    if isinstance(obj, dict) or (isinstance(obj, (list, tuple, np.ndarray)) and len(obj)):
        if isinstance(obj, dict):
            items = [f"{json.dumps(str(k))}: {dumps_json(v, indent, _level + 1)}"
                     for k, v in obj.items()]
            open_, close = "{", "}"
        else:
            seq = obj.tolist() if isinstance(obj, np.ndarray) else obj
            items = [dumps_json(v, indent, _level + 1) for v in seq]
            open_, close = "[", "]"
            if all(not isinstance(v, (dict, list, tuple)) for v in seq):
                return "[" + ", ".join(items) + "]"
        if not items:
            return open_ + close
        if indent is None:
            return open_ + ", ".join(items) + close
        pad = " " * (indent * (_level + 1))
        end = " " * (indent * _level)
        return open_ + "\n" + ",\n".join(pad + i for i in items) + "\n" + end + close
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if not math.isfinite(value):
            raise ValueError("cannot serialise non-finite float to JSON")
        text = f"{value:.17g}"
        return text if any(c in text for c in ".en") else text + ".0"
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")
