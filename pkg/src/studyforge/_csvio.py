"""Canonical CSV dialect and scalar text conversion."""

import csv
import io
import math
import re

_DECIMAL_RE = re.compile(
    r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?|[+-]?(?:nan|inf|infinity)",
    re.IGNORECASE,
)
_INT_RE = re.compile(r"-?(?:0|[1-9]\d*)")


def write_rows(header, rows):
    """Render rows in the canonical dialect: comma, LF, minimal quoting."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def read_rows(text):
    """Yield ``(line_number, row)`` pairs, skipping blank lines."""
    reader = csv.reader(io.StringIO(text, newline=""), strict=True)
    try:
        for row in reader:
            if row:
                yield reader.line_num, row
    except csv.Error as exc:
        from studyforge.errors import TableError

        raise TableError(f"malformed CSV: {exc}", line=reader.line_num) from None


def to_number(text):
    """Return the float value of a decimal cell, or None for text cells."""
    if _DECIMAL_RE.fullmatch(text):
        return float(text)
    return None


def format_scalar(value):
    """Render an int, float or str parameter value as cell text.

    Floats use the shortest representation that round-trips.
    """
    if isinstance(value, bool):
        raise TypeError("booleans are not supported as scalars")
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    if isinstance(value, str):
        return value
    raise TypeError(f"unsupported scalar type {type(value).__name__}")


def parse_scalar(text):
    """Inverse of :func:`format_scalar` for canonical renderings.

    Text becomes an int or float only if rendering the number reproduces it
    exactly, so non-canonical strings such as ``007`` stay text.
    """
    if _INT_RE.fullmatch(text):
        return int(text)
    if _DECIMAL_RE.fullmatch(text):
        value = float(text)
        if format_scalar(value) == text:
            return value
    return text
