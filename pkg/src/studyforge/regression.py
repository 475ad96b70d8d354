"""Tolerance-based comparison of a produced table against a reference.

Two numbers ``a`` and ``b`` are close when::

    |a - b| <= abs + rel * max(|a|, |b|)

NaN equals NaN only with ``nan_equal``; infinities equal only the
same-signed infinity. Text cells compare exactly.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from studyforge._csvio import to_number
from studyforge.errors import StudyforgeError

PASS = "pass"
FAIL = "fail"
STRUCTURAL_MISMATCH = "structural-mismatch"


@dataclass(frozen=True)
class ToleranceSpec:
    rel: float = 1e-6
    abs: float = 1e-12
    nan_equal: bool = False
    overrides: dict = field(default_factory=dict, hash=False)

    def __post_init__(self):
        pairs = [(self.rel, self.abs), *self.overrides.values()]
        for rel, abs_ in pairs:
            if not (rel >= 0 and abs_ >= 0):
                raise StudyforgeError(f"tolerances must be non-negative, got rel={rel} abs={abs_}")

    def for_column(self, column):
        """Resolved ``(rel, abs)`` pair for one column."""
        return tuple(self.overrides.get(column, (self.rel, self.abs)))


def values_close(a, b, rel=1e-6, abs=1e-12, nan_equal=False):
    if math.isnan(a) or math.isnan(b):
        return nan_equal and math.isnan(a) and math.isnan(b)
    if math.isinf(a) or math.isinf(b):
        return a == b
    return math.fabs(a - b) <= abs + rel * max(math.fabs(a), math.fabs(b))


@dataclass
class ColumnStats:
    max_abs_dev: float = 0.0
    max_rel_dev: float = 0.0
    first_failing_row: int = None
    failures: int = 0

    def to_dict(self):
        return {
            "max_abs_dev": _json_float(self.max_abs_dev),
            "max_rel_dev": _json_float(self.max_rel_dev),
            "first_failing_row": self.first_failing_row,
            "failures": self.failures,
        }


@dataclass
class ComparisonReport:
    status: str
    columns: dict = field(default_factory=dict)
    missing_columns: list = field(default_factory=list)
    extra_columns: list = field(default_factory=list)
    row_count_delta: int = 0
    duplicate_keys: list = field(default_factory=list)
    failing_cells: list = field(default_factory=list)

    @property
    def passed(self):
        return self.status == PASS

    def to_dict(self):
        return {
            "status": self.status,
            "columns": {k: v.to_dict() for k, v in self.columns.items()},
            "missing_columns": list(self.missing_columns),
            "extra_columns": list(self.extra_columns),
            "row_count_delta": self.row_count_delta,
            "duplicate_keys": [list(k) for k in self.duplicate_keys],
            "failing_cells": [[r, c] for r, c in self.failing_cells],
        }


def _json_float(x):
    return x if math.isfinite(x) else str(x)


def _sorted_by_keys(table, keys):
    idx = [table.index(k) for k in keys]
    rows = sorted(table.rows, key=lambda r: tuple(r[i] for i in idx))
    dups = []
    for prev, cur in zip(rows, rows[1:]):
        kp = tuple(prev[i] for i in idx)
        if kp == tuple(cur[i] for i in idx) and kp not in dups:
            dups.append(kp)
    return rows, dups


def _numeric(cells):
    """Float array of cells, NaN where not numeric, plus a numeric mask."""
    vals = [to_number(c) for c in cells]
    mask = np.array([v is not None for v in vals], dtype=bool)
    arr = np.array([v if v is not None else np.nan for v in vals], dtype=float)
    return arr, mask


def _compare_column(act_cells, ref_cells, rel, abs_, nan_equal):
    """Boolean failure mask and deviation stats for one aligned column."""
    a, a_num = _numeric(act_cells)
    r, r_num = _numeric(ref_cells)
    both = a_num & r_num
    text_fail = ~both & (np.array(act_cells, dtype=object) != np.array(ref_cells, dtype=object))

    with np.errstate(invalid="ignore", over="ignore"):
        diff = np.abs(a - r)
        scale = np.maximum(np.abs(a), np.abs(r))
        close = diff <= abs_ + rel * scale
        a_nan, r_nan = np.isnan(a), np.isnan(r)
        any_nan = a_nan | r_nan
        close = np.where(any_nan, nan_equal & a_nan & r_nan, close)
        any_inf = np.isinf(a) | np.isinf(r)
        close = np.where(any_inf & ~any_nan, a == r, close)
    num_fail = both & ~close

    stats = ColumnStats()
    finite = both & ~any_nan
    if finite.any():
        d = np.where(any_inf, np.where(a == r, 0.0, np.inf), diff)[finite]
        s = scale[finite]
        with np.errstate(invalid="ignore", divide="ignore"):
            reld = np.where(np.isinf(d), np.inf, d / np.where(s == 0, 1.0, s))
            reld = np.where(d == 0, 0.0, reld)
        stats.max_abs_dev = float(d.max())
        stats.max_rel_dev = float(reld.max())
    failed = num_fail | text_fail
    stats.failures = int(failed.sum())
    if stats.failures:
        stats.first_failing_row = int(np.argmax(failed))
    return failed, stats


def compare_tables(actual, reference, tol=None, key_columns=None):
    """Compare ``actual`` against ``reference`` column by column.

    Columns align by name. Rows align by position unless ``key_columns`` is
    given, in which case both tables are first sorted on the text of those
    columns. Differing column sets, row counts or duplicate keys give a
    structural mismatch; cells are still compared over the common region.
    """
    tol = tol or ToleranceSpec()
    keys = list(key_columns or [])
    for k in keys:
        if k not in actual.columns or k not in reference.columns:
            raise StudyforgeError(f"key column {k!r} missing from a table")

    report = ComparisonReport(status=PASS)
    report.missing_columns = [c for c in reference.columns if c not in actual.columns]
    report.extra_columns = [c for c in actual.columns if c not in reference.columns]
    report.row_count_delta = len(actual) - len(reference)

    if keys:
        act_rows, dups_a = _sorted_by_keys(actual, keys)
        ref_rows, dups_r = _sorted_by_keys(reference, keys)
        report.duplicate_keys = dups_r + [d for d in dups_a if d not in dups_r]
    else:
        act_rows, ref_rows = actual.rows, reference.rows

    n = min(len(act_rows), len(ref_rows))
    common = [c for c in reference.columns if c in actual.columns]
    failing = set()
    for col in common:
        ai, ri = actual.index(col), reference.index(col)
        act_cells = [row[ai] for row in act_rows[:n]]
        ref_cells = [row[ri] for row in ref_rows[:n]]
        rel, abs_ = tol.for_column(col)
        failed, stats = _compare_column(act_cells, ref_cells, rel, abs_, tol.nan_equal)
        report.columns[col] = stats
        failing.update((int(i), col) for i in np.flatnonzero(failed))

    order = {c: i for i, c in enumerate(reference.columns)}
    report.failing_cells = sorted(failing, key=lambda rc: (rc[0], order[rc[1]]))
    structural = (
        report.missing_columns or report.extra_columns
        or report.row_count_delta or report.duplicate_keys
    )
    if structural:
        report.status = STRUCTURAL_MISMATCH
    elif failing:
        report.status = FAIL
    return report
