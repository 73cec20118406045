"""
A two-group layout with i.i.d. skewed errors
=============================================

Two groups of two observations each.  The errors are i.i.d. two-point with
``P(e = 2) = 0.2``.  A single matrix ``H`` that is orthogonal to the design
shifts both group means; for the first contrast the shift reduces variance.
"""

import numpy as np

from gmlab import DesignMatrix, example_ex2, solve_h_space
from gmlab.lab import EX2_H

design, est, dist, report = example_ex2(p=0.2)
print(design.X)
print(EX2_H)

###############################################################################
# ``H`` lies in the six-dimensional space of admissible perturbations.

basis = solve_h_space(design)
print("dim", basis.dim, "residual of H outside the span", basis.residual(EX2_H))

###############################################################################
# Third moment 1.5, so the covariance term is 1.5 and the gain is
# ``1.5 ** 2 / 17``.

print(report.cov_term, report.quad_var, report.improvement)

###############################################################################
# With symmetric errors the covariance term vanishes and no gain is left.

sym = example_ex2(p=0.5).report
print("symmetric:", sym.cov_term, sym.improvement)
