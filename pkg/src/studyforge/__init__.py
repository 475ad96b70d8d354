"""Reproducible parameter studies with interoperable secondary data.

The package expands parameter studies into numbered cases, runs them,
collects their secondary data into CSV tables with ``PARAM_`` metadata
columns, compares results against references, packages archives, keeps a
cross-link ledger of persistent identifiers and lints container recipes.
"""

from studyforge.errors import StudyforgeError

__version__ = "0.1.0"

__all__ = ["StudyforgeError", "__version__"]
