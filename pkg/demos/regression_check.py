"""
Checking new results against a reference
========================================

Two tables agree when every numeric cell is within
``abs + rel * max(|a|, |b|)`` of its counterpart and text cells match.
"""

from studyforge.regression import ToleranceSpec, compare_tables
from studyforge.secondary_table import read_table

reference = read_table(
    "PARAM_STEP,EPOCH,MSE\n"
    "0.001,1,1.0915\n0.001,2,1.0829\n0.01,1,0.9923\n0.01,2,0.9919\n"
)

###############################################################################
# A rerun that drifted slightly in one cell.

rerun = read_table(
    "PARAM_STEP,EPOCH,MSE\n"
    "0.001,1,1.0915\n0.001,2,1.0829\n0.01,1,0.9926\n0.01,2,0.9919\n"
)
strict = compare_tables(rerun, reference)
print(strict.status, strict.failing_cells)
print(strict.columns["MSE"])

###############################################################################
# Loosening the tolerance for one column only.

loose = ToleranceSpec(overrides={"MSE": (1e-3, 0.0)})
print(compare_tables(rerun, reference, loose).status)

###############################################################################
# Reordered rows can be aligned on key columns; a missing column is a
# structural problem rather than a numeric one.

shuffled = read_table(
    "PARAM_STEP,EPOCH,MSE\n"
    "0.01,2,0.9919\n0.01,1,0.9923\n0.001,2,1.0829\n0.001,1,1.0915\n"
)
print(compare_tables(shuffled, reference, key_columns=["PARAM_STEP", "EPOCH"]).status)
print(compare_tables(read_table("PARAM_STEP,EPOCH\n0.01,1\n"), reference).status)
