"""CSV ingestion of grouped curves and survival-curve preprocessing.

Dataset files are long-format CSV: one subject per row, ``group`` and
``subject`` in the first two columns and the curve values after them.  An
optional header row starts with ``group,subject``; if the remaining header
fields are all numeric they are taken as the grid points.
"""
from __future__ import annotations

import csv
import io
import os
import tempfile
from collections import OrderedDict

import numpy as np

from .core import FunctionalDataset, FunctionalGroup, Grid
from .errors import ValidationError

__all__ = [
    "load_dataset",
    "read_dataset",
    "write_dataset",
    "dataset_to_csv",
    "survival_preprocess",
    "load_counts",
    "atomic_write",
]


def _is_header(row) -> bool:
    return len(row) >= 2 and row[0].strip().lower() == "group" and row[1].strip().lower() == "subject"


def _parse_float(text: str):
    try:
        return float(text)
    except ValueError:
        return None


def _read_table(text: str, source: str):
    """Rows as ``(lineno, group, subject, values)`` plus header grid points (or None)."""
    reader = csv.reader(io.StringIO(text))
    header_points = None
    rows = []
    width = None
    for lineno, row in enumerate(reader, start=1):
        if not row or all(not f.strip() for f in row):
            continue
        if not rows and header_points is None and _is_header(row):
            parsed = [_parse_float(f) for f in row[2:]]
            if parsed and all(p is not None for p in parsed):
                header_points = parsed
            width = len(row) - 2
            continue
        if len(row) < 3:
            raise ValidationError(f"{source}: line {lineno}: expected group, subject and values")
        values = []
        for col, field in enumerate(row[2:], start=3):
            v = _parse_float(field)
            if v is None or not np.isfinite(v):
                raise ValidationError(
                    f"{source}: line {lineno}, column {col}: non-numeric value {field!r}"
                )
            values.append(v)
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise ValidationError(
                f"{source}: line {lineno}: {len(values)} values, expected {width}"
            )
        rows.append((lineno, row[0].strip(), row[1].strip(), values))
    if not rows:
        raise ValidationError(f"{source}: no data rows")
    return rows, header_points


def _group_rows(rows, source: str):
    groups = OrderedDict()
    for _, label, _, values in rows:
        groups.setdefault(label, []).append(values)
    for label, curves in groups.items():
        if len(curves) < 2:
            raise ValidationError(f"{source}: group {label!r} has {len(curves)} subject(s); need 2")
    return groups


def read_dataset(text: str, grid: Grid | None = None, source: str = "<string>") -> FunctionalDataset:
    rows, header_points = _read_table(text, source)
    groups = _group_rows(rows, source)
    J = len(rows[0][3])
    if grid is None:
        if header_points is not None:
            if np.any(np.diff(header_points) <= 0):
                raise ValidationError(f"{source}: header grid points must be strictly increasing")
            grid = Grid.from_points(header_points)
        else:
            grid = Grid.uniform(J)
    if grid.J != J:
        raise ValidationError(f"{source}: rows have {J} values but the grid has {grid.J} points")
    return FunctionalDataset(
        grid, tuple(FunctionalGroup(np.array(c), label) for label, c in groups.items())
    )


def load_dataset(path, grid: Grid | None = None) -> FunctionalDataset:
    """Read a dataset file; groups keep their first-appearance order.

    The grid comes from ``grid`` if given, else from a numeric header, else
    it is uniform on ``[0, 1]``.
    """
    with open(path, newline="") as fh:
        return read_dataset(fh.read(), grid, str(path))


def dataset_to_csv(dataset: FunctionalDataset) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["group", "subject"] + [repr(float(p)) for p in dataset.grid.points])
    for g in dataset.groups:
        for j, curve in enumerate(g.curves, start=1):
            writer.writerow([g.label, f"s{j}"] + [repr(float(v)) for v in curve])
    return out.getvalue()


def write_dataset(dataset: FunctionalDataset, path) -> None:
    atomic_write(path, dataset_to_csv(dataset))


def atomic_write(path, text: str) -> None:
    """Write via a temporary file in the target directory and rename over ``path``."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def survival_preprocess(counts, lo: int = 2, hi: int = 31, label: str = "") -> FunctionalGroup:
    """Survival curves from daily alive counts.

    ``counts`` has one row per cohort and one column per day, day 1 first.
    Each row is divided by its day-1 count and restricted to days ``lo..hi``
    (1-based, inclusive).  Counts are not required to be monotone.
    """
    counts = np.asarray(counts, dtype=float)
    if counts.ndim != 2:
        raise ValidationError("counts must be a cohorts x days matrix")
    if lo < 2 or hi < lo or hi > counts.shape[1]:
        raise ValidationError(
            f"day range [{lo}, {hi}] invalid for {counts.shape[1]} days (need 2 <= lo <= hi)"
        )
    initial = counts[:, 0]
    if np.any(initial <= 0):
        bad = np.flatnonzero(initial <= 0).tolist()
        raise ValidationError(f"cohorts {bad} have a nonpositive initial count")
    return FunctionalGroup(counts[:, lo - 1:hi] / initial[:, None], label)


def load_counts(path, lo: int = 2, hi: int = 31) -> FunctionalDataset:
    """Dataset of survival curves from a long-format file of daily alive counts.

    Same layout as a dataset file, with day-1..day-D counts in place of
    curve values.  The grid is the retained day numbers.
    """
    with open(path, newline="") as fh:
        rows, _ = _read_table(fh.read(), str(path))
    groups = _group_rows(rows, str(path))
    out = tuple(survival_preprocess(np.array(c), lo, hi, label) for label, c in groups.items())
    return FunctionalDataset(Grid.from_points(np.arange(lo, hi + 1, dtype=float)), out)
