"""
A parameter study from definition to archive
============================================

Define a small sweep, run every case locally, merge the per-case results
into one self-describing table, render a report and pack it up.
"""

import sys
import tempfile
from pathlib import Path

from studyforge import packaging, report, runner
from studyforge.secondary_table import collect_study, group_by_metadata, save_table
from studyforge.study_model import expand, parse_study_definition, write_case_map

work = Path(tempfile.mkdtemp())
root = work / "results"

###############################################################################
# The definition lists parameters in order; the last one varies fastest.
# Each case evaluates a damped oscillator at a few time steps and writes
# ``secondary.csv`` into its own directory.

(work / "oscillator.py").write_text("""\
import math, sys
d, w = map(float, sys.argv[1:])
with open("secondary.csv", "w") as fh:
    fh.write("T,X\\n")
    for t in range(8):
        fh.write(f"{t},{math.exp(-d * t) * math.cos(w * t)!r}\\n")
""")
definition = parse_study_definition(f"""
study: oscillator
parameters:
  DAMPING: [0.1, 0.5]
  OMEGA: [1.0, 2.0, 3.0]
command: {sys.executable} {work / "oscillator.py"} {{DAMPING}} {{OMEGA}}
secondary_file: secondary.csv
primary_globs: ["*.h5"]
""")
plan = expand(definition)
print(write_case_map(plan))

###############################################################################
# Materialize one directory per case, then run them two at a time.

runner.materialize(plan, root)
result = runner.run(plan, definition, runner.ExecutorConfig(root=root, max_parallel=2))
print(result.counts)

###############################################################################
# Collecting prefixes every row with its ``PARAM_`` columns, so the merged
# table can be split again by parameter values.

sdir = root / plan.study_name
table, missing = collect_study(sdir, definition.secondary_file)
save_table(table, sdir / "secondary.csv")
for key, group in group_by_metadata(table, ["PARAM_DAMPING"]):
    print(key, len(group), "rows")

###############################################################################
# A report is a single HTML file with inline SVG; metadata and the archive
# come last so their checksums cover the report too.

charts = [report.ChartSpec("T", "X", group_by="PARAM_OMEGA")]
html = report.render_study_html(plan, result, table, charts=charts)
(sdir / "report.html").write_text(html)
packaging.export_study_metadata(plan, table, sdir, created=0,
                                primary_globs=definition.primary_globs, missing_cases=missing)
manifest = packaging.package_secondary(root, root.parent / "secondary.tar.gz", mtime=0)
print("\n".join(manifest.paths))
