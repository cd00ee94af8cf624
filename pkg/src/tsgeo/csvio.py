"""CSV reading and writing for series, metrics, and predictions.

The reader accepts the common layouts: optional header row, optional
leading date/index column, one column per channel.  Errors name the
offending 1-based line so bad files are easy to fix.  Writers emit a
fixed column order and "\n" line endings so identical runs produce
identical bytes.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .series import TimeSeries


def _is_number(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def read_csv(path) -> TimeSeries:
    """Load a series from CSV.

    Row 0 is treated as a header when any cell past the first fails to
    parse as a number (the first cell alone decides for single-column
    files, since a date there would leave no channels anyway).  If the
    first column of the data rows is non-numeric it is treated as a
    date/index column and dropped.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        rows = [(i + 1, row) for i, row in enumerate(csv.reader(fh)) if row]
    if not rows:
        raise ValueError(f"{path}: empty CSV file")

    width = len(rows[0][1])
    for lineno, row in rows:
        if len(row) != width:
            raise ValueError(
                f"{path}: line {lineno} has {len(row)} fields, "
                f"expected {width}")

    first = rows[0][1]
    probe = first[1:] if width > 1 else first
    has_header = any(not _is_number(cell.strip()) for cell in probe)
    header = [cell.strip() for cell in first] if has_header else None
    data_rows = rows[1:] if has_header else rows
    if not data_rows:
        raise ValueError(f"{path}: header but no data rows")

    has_date_col = width > 1 and not _is_number(data_rows[0][1][0].strip())
    col0 = 1 if has_date_col else 0
    names = header[col0:] if header else None

    values = np.empty((len(data_rows), width - col0))
    for r, (lineno, row) in enumerate(data_rows):
        for c in range(col0, width):
            cell = row[c].strip()
            if not _is_number(cell):
                raise ValueError(
                    f"{path}: line {lineno}, column {c + 1}: "
                    f"could not parse {cell!r} as a number")
            values[r, c - col0] = float(cell)
    return TimeSeries(values, names=names)


def write_rows_csv(path, rows: Sequence[Dict], fieldnames: Sequence[str]):
    """Dict rows to CSV in the given column order."""
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(fieldnames),
                                lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _format(row.get(k)) for k in fieldnames})


def _format(value):
    # np.float64 subclasses float, so unwrap before repr to keep the
    # plain decimal form
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return int(value)
    return value


def write_series_csv(path, values: np.ndarray,
                     names: Optional[Sequence[str]] = None,
                     index_name: str = "step"):
    """A (T, N) array as step-indexed CSV."""
    values = np.asarray(values)
    if values.ndim == 1:
        values = values[:, None]
    n = values.shape[1]
    names = list(names) if names else [f"ch{c}" for c in range(n)]
    if len(names) != n:
        raise ValueError(f"{len(names)} names for {n} columns")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([index_name] + names)
        for t in range(values.shape[0]):
            writer.writerow([t] + [repr(float(v)) for v in values[t]])


def write_predictions_csv(path, pred: np.ndarray, truth: np.ndarray,
                          names: Optional[Sequence[str]] = None):
    """Forecast next to ground truth, one step per row."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.ndim == 1:
        pred = pred[:, None]
    if truth.ndim == 1:
        truth = truth[:, None]
    if pred.shape != truth.shape:
        raise ValueError(
            f"prediction {pred.shape} vs truth {truth.shape} shape mismatch")
    n = pred.shape[1]
    names = list(names) if names else [f"ch{c}" for c in range(n)]
    header = ["step"]
    for name in names:
        header += [f"{name}_pred", f"{name}_true"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for t in range(pred.shape[0]):
            row = [t]
            for c in range(n):
                row += [repr(float(pred[t, c])), repr(float(truth[t, c]))]
            writer.writerow(row)
