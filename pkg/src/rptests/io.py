"""CSV input and output for matrices and response vectors."""

from __future__ import annotations

import csv

import numpy as np

from .exceptions import DimensionMismatch, NonFinite

__all__ = ["read_matrix", "read_table", "read_response", "write_matrix"]


def _is_number(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


def read_table(path):
    """Read a CSV of floats with an optional header row.

    Returns ``(values, header)``; ``header`` is ``None`` when the first row
    is numeric.
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise DimensionMismatch(f"{path} is empty")
    header = None
    if not all(_is_number(c) for c in rows[0]):
        header, rows = [c.strip() for c in rows[0]], rows[1:]
    width = len(rows[0]) if rows else len(header or [])
    if any(len(r) != width for r in rows):
        raise DimensionMismatch(f"{path} has rows of different lengths")
    try:
        values = np.array([[float(c) for c in r] for r in rows], dtype=float).reshape(len(rows), width)
    except ValueError as exc:
        raise NonFinite(f"{path} contains a non-numeric entry") from exc
    if not np.all(np.isfinite(values)):
        raise NonFinite(f"{path} contains NaN or Inf")
    return values, header


def read_matrix(path):
    return read_table(path)[0]


def read_response(path, column=None):
    """Response vector from a one-column CSV, or the named or numbered column."""
    values, header = read_table(path)
    if column is None:
        if values.shape[1] != 1:
            raise DimensionMismatch(f"{path} has {values.shape[1]} columns; name one with --y-column")
        return values[:, 0]
    if header is not None and column in header:
        return values[:, header.index(column)]
    try:
        return values[:, int(column)]
    except (ValueError, IndexError) as exc:
        raise DimensionMismatch(f"column {column!r} not found in {path}") from exc


def write_matrix(path, values, header=None):
    """Write ``values`` with round-trip float formatting; vectors become one column."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if header is not None:
            w.writerow(header)
        for row in values:
            w.writerow([repr(float(v)) for v in row])
