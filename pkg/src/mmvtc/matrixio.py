"""Headered CSV exchange format for dense matrices.

One matrix per file: a header line ``# rows=<r> cols=<c>`` followed by one
comma-separated row per line, row-major, full-precision decimal floats
(shortest round-trip representation).
"""

from __future__ import annotations

import re
from pathlib import Path
from typing import Union

import numpy as np

__all__ = ["write_matrix", "read_matrix"]

_HEADER = re.compile(r"^#\s*rows=(\d+)\s+cols=(\d+)\s*$")


def write_matrix(path: Union[str, Path], a: np.ndarray) -> None:
    """Write a 2-d array to the headered CSV format."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-d array, got shape {a.shape}")
    lines = [f"# rows={a.shape[0]} cols={a.shape[1]}"]
    lines.extend(",".join(repr(v) for v in row) for row in a.tolist())
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix(path: Union[str, Path]) -> np.ndarray:
    """Read a matrix written by ``write_matrix``.

    Raises ``ValueError`` on a malformed header or a shape mismatch.
    """
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty matrix file")
    match = _HEADER.match(lines[0])
    if match is None:
        raise ValueError(f"{path}: missing '# rows=<r> cols=<c>' header")
    rows, cols = int(match.group(1)), int(match.group(2))
    body = lines[1:]
    if len(body) != rows:
        raise ValueError(f"{path}: header promises {rows} rows, found {len(body)}")
    try:
        a = np.array([[float(v) for v in ln.split(",")] for ln in body], dtype=float)
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric entry ({exc})") from exc
    if a.size == 0:
        a = a.reshape(rows, cols) if rows * cols == 0 else a
    if a.ndim != 2 or a.shape != (rows, cols):
        raise ValueError(f"{path}: body shape {a.shape} does not match header {(rows, cols)}")
    return a
