"""
Linting a container recipe for reproducibility
==============================================

Images should be rebuildable years later: pinned base images, no files
from the build host, sources fetched from persistent archives at fixed
revisions, and pinned package versions.
"""

from studyforge.recipe_lint import LintConfig, lint_text

recipe = """\
FROM python:latest
COPY solver/ /opt/solver
RUN git clone https://github.com/example/mesh-tools.git /opt/mesh \\
    && git -C /opt/mesh checkout 4f2a9c1
RUN pip install numpy scipy==1.11.4
"""

for f in lint_text(recipe):
    print(f"line {f.line}: {f.severity:7} {f.rule}: {f.message}")

###############################################################################
# Hosts regarded as persistent are configurable, and so are severities.

cfg = LintConfig(persistent_host_allowlist=("github.com",), severity_overrides={"R4-unpinned-package": "error"})
for f in lint_text(recipe, cfg):
    print(f"line {f.line}: {f.severity:7} {f.rule}")
