"""Self-contained static HTML study reports with inline SVG line charts."""

import math
from dataclasses import dataclass
from html import escape

from studyforge.errors import ChartError
from studyforge.secondary_table import group_by_metadata, is_metadata

WIDTH, HEIGHT = 480, 300
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 64, 16, 32, 44
N_TICKS = 5
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")

_CSS = """
body { font-family: sans-serif; margin: 2em; color: #222; }
table { border-collapse: collapse; margin: 1em 0; font-size: 0.9em; }
th, td { border: 1px solid #ccc; padding: 2px 8px; text-align: right; }
th { background: #f0f0f0; }
.succeeded { color: #2a7d2a; } .failed { color: #b22222; } .stopped { color: #996600; }
.verdict { padding: 0.5em 1em; border-radius: 4px; display: inline-block; font-weight: bold; }
.verdict.pass { background: #dff0d8; } .verdict.fail { background: #f2dede; }
svg text { font-size: 11px; }
"""


@dataclass(frozen=True)
class ChartSpec:
    x_column: str
    y_column: str
    group_by: str = None
    title: str = ""

    @classmethod
    def parse(cls, text):
        """Build a spec from ``y=COL,x=COL[,group=PARAM_COL][,title=...]``."""
        fields = {}
        for part in text.split(","):
            key, sep, value = part.partition("=")
            if not sep:
                raise ChartError(f"chart option {part!r} is not key=value")
            fields[key.strip()] = value.strip()
        unknown = set(fields) - {"x", "y", "group", "title"}
        if unknown or "x" not in fields or "y" not in fields:
            raise ChartError(f"chart spec {text!r} needs x= and y= (and optionally group=, title=)")
        return cls(fields["x"], fields["y"], fields.get("group"), fields.get("title", ""))


def _check_spec(table, spec):
    for col in (spec.x_column, spec.y_column):
        if col not in table.columns:
            raise ChartError(f"chart column {col!r} not in table")
        if is_metadata(col):
            raise ChartError(f"chart axis {col!r} must be a data column")
        if any(v is None for c, v in zip(table.column(col), table.values(col)) if c != ""):
            raise ChartError(f"chart column {col!r} is not numeric")
    if spec.group_by is not None:
        if spec.group_by not in table.columns:
            raise ChartError(f"group column {spec.group_by!r} not in table")
        if not is_metadata(spec.group_by):
            raise ChartError(f"group column {spec.group_by!r} must be a PARAM_ column")


def _fmt(v):
    return f"{v:.2f}"


def _ticks(lo, hi):
    return [lo + (hi - lo) * i / (N_TICKS - 1) for i in range(N_TICKS)]


def _domain(values):
    finite = [v for v in values if math.isfinite(v)]
    if not finite:
        return 0.0, 1.0
    lo, hi = min(finite), max(finite)
    if lo == hi:
        pad = abs(lo) * 0.5 or 0.5
        lo, hi = lo - pad, hi + pad
    return lo, hi


def render_chart_svg(table, spec, standalone=False):
    """One polyline per group of ``spec.group_by`` values (or one overall)."""
    _check_spec(table, spec)
    if spec.group_by:
        groups = group_by_metadata(table, [spec.group_by])
    elif len(table):
        groups = [((), table)]
    else:
        groups = []
    series = []
    for key, sub in groups:
        pts = [
            (x, y) for x, y in zip(sub.values(spec.x_column), sub.values(spec.y_column))
            if x is not None and y is not None and math.isfinite(x) and math.isfinite(y)
        ]
        series.append((", ".join(key), pts))
    xlo, xhi = _domain([p[0] for _, pts in series for p in pts])
    ylo, yhi = _domain([p[1] for _, pts in series for p in pts])
    pw = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    ph = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM

    def sx(x):
        return MARGIN_LEFT + (x - xlo) / (xhi - xlo) * pw

    def sy(y):
        return MARGIN_TOP + ph - (y - ylo) / (yhi - ylo) * ph

    ns = ' xmlns="http://www.w3.org/2000/svg"' if standalone else ""
    out = [f'<svg{ns} width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">']
    title = spec.title or f"{spec.y_column} vs {spec.x_column}"
    out.append(f'<text x="{WIDTH / 2:.0f}" y="18" text-anchor="middle">{escape(title)}</text>')
    x0, y0 = MARGIN_LEFT, MARGIN_TOP + ph
    out.append(f'<line class="axis" x1="{x0}" y1="{y0}" x2="{x0 + pw}" y2="{y0}" stroke="#000"/>')
    out.append(f'<line class="axis" x1="{x0}" y1="{MARGIN_TOP}" x2="{x0}" y2="{y0}" stroke="#000"/>')
    for v in _ticks(xlo, xhi):
        x = _fmt(sx(v))
        out.append(f'<line x1="{x}" y1="{y0}" x2="{x}" y2="{y0 + 4}" stroke="#000"/>')
        out.append(f'<text x="{x}" y="{y0 + 16}" text-anchor="middle">{v:.4g}</text>')
    for v in _ticks(ylo, yhi):
        y = _fmt(sy(v))
        out.append(f'<line x1="{x0 - 4}" y1="{y}" x2="{x0}" y2="{y}" stroke="#000"/>')
        out.append(f'<text x="{x0 - 6}" y="{y}" text-anchor="end" dominant-baseline="middle">{v:.4g}</text>')
    out.append(f'<text x="{x0 + pw / 2:.0f}" y="{HEIGHT - 6}" text-anchor="middle">{escape(spec.x_column)}</text>')
    out.append(
        f'<text x="12" y="{MARGIN_TOP + ph / 2:.0f}" text-anchor="middle" '
        f'transform="rotate(-90 12 {MARGIN_TOP + ph / 2:.0f})">{escape(spec.y_column)}</text>'
    )
    for i, (label, pts) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in pts)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        if label:
            ly = MARGIN_TOP + 4 + 14 * i
            out.append(
                f'<text x="{x0 + pw - 4}" y="{ly + 8}" text-anchor="end" fill="{color}">'
                f"{escape(spec.group_by)}={escape(label)}</text>"
            )
    out.append("</svg>")
    return "\n".join(out)


def _table_html(columns, rows, row_class=None):
    head = "".join(f"<th>{escape(c)}</th>" for c in columns)
    body = []
    for r in rows:
        cls = f' class="{escape(row_class(r))}"' if row_class else ""
        cells = "".join(f"<td>{escape(str(c))}</td>" for c in r)
        body.append(f"<tr{cls}>{cells}</tr>")
    return f"<table>\n<thead><tr>{head}</tr></thead>\n<tbody>\n" + "\n".join(body) + "\n</tbody>\n</table>"


def _verdict_html(comparison):
    labels = {"pass": "PASS", "fail": "FAIL", "structural-mismatch": "STRUCTURAL MISMATCH"}
    cls = "pass" if comparison.passed else "fail"
    parts = [
        '<section id="comparison"><h2>Regression comparison</h2>',
        f'<p class="verdict {cls}">{labels[comparison.status]}</p>',
    ]
    if comparison.missing_columns:
        parts.append(f"<p>Missing columns: {escape(', '.join(comparison.missing_columns))}</p>")
    if comparison.extra_columns:
        parts.append(f"<p>Extra columns: {escape(', '.join(comparison.extra_columns))}</p>")
    if comparison.row_count_delta:
        parts.append(f"<p>Row count difference: {comparison.row_count_delta:+d}</p>")
    rows = [
        (col, f"{s.max_abs_dev:.6g}", f"{s.max_rel_dev:.6g}",
         "" if s.first_failing_row is None else s.first_failing_row, s.failures)
        for col, s in comparison.columns.items()
    ]
    parts.append(_table_html(
        ["column", "max abs dev", "max rel dev", "first failing row", "failing cells"], rows))
    parts.append("</section>")
    return "\n".join(parts)


def render_study_html(plan, run_report, table, comparison=None, charts=()):
    """Single HTML document with inline CSS and SVG; no external assets."""
    name = escape(plan.study_name)
    counts = run_report.counts if run_report is not None else {}
    summary = ", ".join(f"{v} {k}" for k, v in counts.items() if v)
    parts = [
        "<!DOCTYPE html>",
        '<html lang="en">',
        f'<head><meta charset="utf-8"><title>Study {name}</title><style>{_CSS}</style></head>',
        "<body>",
        f"<h1>Study {name}</h1>",
        f"<p>{len(plan.cases)} cases; {len(table)} result rows"
        + (f"; {escape(summary)}" if summary else "") + "</p>",
    ]
    results = run_report.by_id() if run_report is not None else {}
    status_rows = []
    for case in plan.cases:
        r = results.get(case.case_id)
        vec = ", ".join(f"{k}={v}" for k, v in case.vector.items())
        status_rows.append((
            case.case_id, vec, r.status if r else "",
            "" if r is None or r.exit_code is None else r.exit_code,
            "" if r is None or r.wall_seconds is None else f"{r.wall_seconds:.3f}",
        ))
    parts.append('<section id="cases"><h2>Cases</h2>')
    parts.append(_table_html(
        ["case", "parameters", "status", "exit code", "wall [s]"], status_rows,
        row_class=lambda row: row[2]))
    parts.append("</section>")
    if comparison is not None:
        parts.append(_verdict_html(comparison))
    if charts:
        parts.append('<section id="charts"><h2>Charts</h2>')
        for spec in charts:
            parts.append(f"<figure>{render_chart_svg(table, spec)}</figure>")
        parts.append("</section>")
    parts.append('<section id="results"><h2>Secondary data</h2>')
    parts.append(_table_html(table.columns, table.rows))
    parts.append("</section>")
    parts += ["</body>", "</html>", ""]
    return "\n".join(parts)


def render_index_html(studies):
    """Project page linking per-study reports by relative path.

    ``studies`` is a sequence of ``(study_name, relative_href, summary)``.
    """
    items = "\n".join(
        f'<li><a href="{escape(href)}">{escape(name)}</a> {escape(summary)}</li>'
        for name, href, summary in studies
    )
    return (
        '<!DOCTYPE html>\n<html lang="en">\n<head><meta charset="utf-8"><title>Studies</title>'
        f"<style>{_CSS}</style></head>\n<body>\n<h1>Studies</h1>\n<ul>\n{items}\n</ul>\n</body>\n</html>\n"
    )
