"""File formats: CSV matrices and tables, partition lines, run manifests.

CSV conventions: UTF-8, comma separated, decimal point, rows are observations
and columns variables for data files. A single leading header row is detected
by attempting to parse the first line as numbers. Floats are written with
``repr``, the shortest round-trip form, so identical values always produce
identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from pathlib import Path

import numpy as np

from .partition import Partition


def _format_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def read_matrix_csv(path) -> np.ndarray:
    """Read a numeric CSV into a 2-d array, skipping one header row if present."""
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    start = 0
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        start = 1
        if len(rows) == 1:
            raise ValueError(f"{path}: only a header row, no data") from None
    width = len(rows[start])
    data = []
    for lineno, row in enumerate(rows[start:], start=start + 1):
        if len(row) != width:
            raise ValueError(f"{path}: row {lineno} has {len(row)} cells, expected {width}")
        try:
            data.append([float(c) for c in row])
        except ValueError as exc:
            raise ValueError(f"{path}: row {lineno}: {exc}") from None
    return np.asarray(data, dtype=float)


def read_vector_csv(path) -> np.ndarray:
    """Read a CSV holding a single column (or single row) of numbers."""
    arr = read_matrix_csv(path)
    if 1 not in arr.shape and arr.ndim == 2:
        raise ValueError(f"{path}: expected a single row or column, got shape {arr.shape}")
    return arr.ravel()


def write_matrix_csv(path, matrix) -> None:
    matrix = np.asarray(matrix, dtype=float)
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in matrix:
            writer.writerow([repr(float(v)) for v in row])


def write_table_csv(path, columns, rows) -> None:
    """Write a header plus rows of mixed int/float/str cells, deterministically."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format_cell(v) for v in row])


def read_partition_file(path) -> Partition:
    text = Path(path).read_text(encoding="utf-8").strip()
    return Partition.from_line(text)


def write_partition_file(path, b: Partition) -> None:
    Path(path).write_text(b.to_line() + "\n", encoding="utf-8")


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(path, payload: dict) -> None:
    """Write the run manifest; adds a timestamp and format marker."""
    payload = dict(payload)
    payload.setdefault("artifact", "blockshap")
    payload.setdefault("timestamp", time.strftime("%Y-%m-%dT%H:%M:%S%z"))
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n",
        encoding="utf-8",
    )
