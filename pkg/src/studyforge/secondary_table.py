"""Secondary data as flat CSV with per-row metadata in ``PARAM_`` columns.

Every row repeats the parameter values it was produced with, so a table is
self-describing without any side-car metadata file::

    PARAM_HIDDEN_LAYERS,PARAM_OPTIMIZER_STEP,PARAM_MAX_ITERATIONS,EPOCH,TRAINING_MSE
    "10,10,10,10",0.0001,3000,1,1.091560

Cells are kept as the text they were read with; numeric values are derived
on demand so that untouched cells survive a read-write cycle byte for byte.
"""

from dataclasses import dataclass
from pathlib import Path

from studyforge._csvio import format_scalar, read_rows, to_number, write_rows
from studyforge.errors import StudyforgeError, TableError
from studyforge.study_model import PARAM_PREFIX

ERROR = "error"
WARNING = "warning"


@dataclass(frozen=True)
class Finding:
    severity: str
    message: str
    column: str = None

    def to_dict(self):
        return {"severity": self.severity, "message": self.message, "column": self.column}


def is_metadata(column):
    return column.startswith(PARAM_PREFIX)


class SecondaryTable:
    """Rectangular table of text cells with unique, non-empty column names."""

    def __init__(self, columns, rows=(), check_duplicates=True):
        self.columns = tuple(columns)
        self.rows = [tuple(r) for r in rows]
        seen = set()
        for name in self.columns:
            if not name:
                raise TableError("empty column name")
            if name in seen:
                raise TableError(f"duplicate column {name!r}")
            seen.add(name)
        width = len(self.columns)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise TableError(f"row {i} has {len(row)} cells, expected {width}")
            if not all(isinstance(c, str) for c in row):
                raise TableError(f"row {i} contains non-text cells")
        if check_duplicates:
            dup = _first_duplicate(self.rows)
            if dup is not None:
                raise TableError(f"rows {dup[0]} and {dup[1]} are identical")

    @classmethod
    def from_records(cls, columns, records):
        """Build a table from rows of Python scalars (numbers are formatted)."""
        rows = [tuple(format_scalar(v) for v in rec) for rec in records]
        return cls(columns, rows)

    @property
    def metadata_columns(self):
        return tuple(c for c in self.columns if is_metadata(c))

    @property
    def data_columns(self):
        return tuple(c for c in self.columns if not is_metadata(c))

    def index(self, column):
        try:
            return self.columns.index(column)
        except ValueError:
            raise TableError(f"unknown column {column!r}") from None

    def column(self, name):
        i = self.index(name)
        return [row[i] for row in self.rows]

    def values(self, name):
        """Numeric values of a column; None where a cell is not a number."""
        return [to_number(cell) for cell in self.column(name)]

    def metadata(self, row_index):
        row = self.rows[row_index]
        return tuple(row[i] for i, c in enumerate(self.columns) if is_metadata(c))

    def __len__(self):
        return len(self.rows)

    def __eq__(self, other):
        if not isinstance(other, SecondaryTable):
            return NotImplemented
        return self.columns == other.columns and self.rows == other.rows

    def __repr__(self):
        return f"SecondaryTable(columns={list(self.columns)}, rows={len(self.rows)})"


def _first_duplicate(rows):
    seen = {}
    for i, row in enumerate(rows):
        if row in seen:
            return seen[row], i
        seen[row] = i
    return None


def read_table(text):
    """Parse CSV text; raises :class:`TableError` citing the offending line."""
    if not text:
        raise TableError("empty input")
    rows = read_rows(text)
    try:
        _, header = next(rows)
    except StopIteration:
        raise TableError("no header row") from None
    seen = set()
    for name in header:
        if not name:
            raise TableError("empty column name", line=1)
        if name in seen:
            raise TableError(f"duplicate column {name!r}", line=1)
        seen.add(name)
    body = []
    first_line = {}
    for line, row in rows:
        if len(row) != len(header):
            raise TableError(f"expected {len(header)} cells, found {len(row)}", line=line)
        row = tuple(row)
        if row in first_line:
            raise TableError(f"duplicate of the row on line {first_line[row]}", line=line)
        first_line[row] = line
        body.append(row)
    return SecondaryTable(header, body, check_duplicates=False)


def load_table(path):
    return read_table(Path(path).read_text(encoding="utf-8"))


def write_table(table):
    return write_rows(table.columns, table.rows)


def save_table(table, path):
    Path(path).write_text(write_table(table), encoding="utf-8", newline="")


def validate_table(table):
    """Return findings about interoperability problems; never raises."""
    findings = []
    dup = _first_duplicate(table.rows)
    if dup is not None:
        findings.append(Finding(ERROR, f"rows {dup[0]} and {dup[1]} are identical"))
    if not table.metadata_columns:
        findings.append(Finding(WARNING, f"no metadata ({PARAM_PREFIX}) columns"))
    if not table.data_columns:
        findings.append(Finding(WARNING, "no data columns"))
    for i, name in enumerate(table.columns):
        cells = [row[i] for row in table.rows if row[i] != ""]
        numeric = sum(1 for c in cells if to_number(c) is not None)
        if 0 < numeric < len(cells):
            findings.append(
                Finding(WARNING, f"column {name!r} mixes numeric and text cells", name)
            )
    return findings


def collect(plan, per_case_tables, include_case_id=False):
    """Merge per-case tables into one table with ``PARAM_`` columns.

    Cases absent from ``per_case_tables`` are skipped, which lets partially
    run (stopped) studies be collected. With ``include_case_id`` a leading
    ``PARAM_CASE_ID`` column is added.
    """
    known = {c.case_id for c in plan.cases}
    unknown = sorted(set(per_case_tables) - known)
    if unknown:
        raise TableError(f"tables given for unknown cases {unknown}")
    header = None
    for case_id in sorted(per_case_tables):
        t = per_case_tables[case_id]
        if t.metadata_columns:
            raise TableError(
                f"case {case_id} table already has metadata columns {list(t.metadata_columns)}"
            )
        if header is None:
            header = t.columns
        elif t.columns != header:
            raise TableError(
                f"case {case_id} columns {list(t.columns)} differ from {list(header)}"
            )
    header = header or ()
    meta_cols = [PARAM_PREFIX + name for name in plan.parameters]
    if include_case_id:
        meta_cols.insert(0, PARAM_PREFIX + "CASE_ID")
    rows = []
    for case in plan.cases:
        t = per_case_tables.get(case.case_id)
        if t is None:
            continue
        meta = [format_scalar(case.vector[n]) for n in plan.parameters]
        if include_case_id:
            meta.insert(0, str(case.case_id))
        meta = tuple(meta)
        rows.extend(meta + row for row in t.rows)
    return SecondaryTable(meta_cols + list(header), rows)


def group_by_metadata(table, columns=None):
    """Partition rows by metadata tuple, in order of first occurrence.

    ``columns`` restricts the grouping key to a subset of metadata columns.
    """
    cols = table.metadata_columns if columns is None else tuple(columns)
    idx = [table.index(c) for c in cols]
    groups = {}
    for row in table.rows:
        groups.setdefault(tuple(row[i] for i in idx), []).append(row)
    return [
        (key, SecondaryTable(table.columns, rows, check_duplicates=False))
        for key, rows in groups.items()
    ]


def _cells_match(cell, wanted):
    if cell == wanted:
        return True
    a, b = to_number(cell), to_number(wanted)
    return a is not None and b is not None and a == b


def filter_rows(table, predicate):
    """Keep rows where every ``column=value`` pair matches.

    ``predicate`` is a mapping or a sequence of pairs. Numbers compare by
    value, so ``1.0`` matches a cell ``1``.
    """
    pairs = list(predicate.items()) if hasattr(predicate, "items") else list(predicate)
    checks = [(table.index(col), str(value)) for col, value in pairs]
    rows = [r for r in table.rows if all(_cells_match(r[i], v) for i, v in checks)]
    return SecondaryTable(table.columns, rows, check_duplicates=False)


def collect_study(sdir, secondary_file, include_case_id=False):
    """Collect a materialized study from disk.

    Reads ``<case>/<secondary_file>`` of every succeeded case. Returns the
    merged table and the sorted IDs of cases that contributed nothing
    (not succeeded, or no output file).
    """
    from studyforge.runner import SUCCEEDED, load_plan, read_status

    sdir = Path(sdir)
    plan = load_plan(sdir)
    tables, missing = {}, []
    for case in plan.cases:
        cdir = sdir / str(case.case_id)
        path = cdir / secondary_file
        try:
            ok = read_status(cdir) == SUCCEEDED
        except StudyforgeError:
            ok = False
        if not ok or not path.is_file():
            missing.append(case.case_id)
            continue
        try:
            tables[case.case_id] = load_table(path)
        except TableError as exc:
            raise TableError(f"case {case.case_id}: {exc}") from None
    return collect(plan, tables, include_case_id=include_case_id), missing
