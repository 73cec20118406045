"""
Counting admissible quadratic perturbations
============================================

Symmetric ``H`` with ``tr H = 0`` and ``X'HX = 0``.  For ``n`` observations
and ``k`` regressors in general position the space has dimension
``n(n+1)/2 - 1 - k(k+1)/2``.
"""

import numpy as np

from gmlab import DesignMatrix, solve_h_space

rng = np.random.default_rng(3)
print(" n  k  dim  rank")
for n in range(2, 8):
    for k in range(1, min(n, 4)):
        hb = solve_h_space(DesignMatrix(rng.normal(size=(n, k))))
        print(f"{n:2d} {k:2d} {hb.dim:4d} {hb.constraint_rank:5d}")

###############################################################################
# Location model: constant column, so the second constraint is ``1'H1 = 0``.
# With i.i.d. errors the covariance with the sample mean is
# ``mu3 * tr(H) / n``, which the trace constraint kills.

hb = solve_h_space(DesignMatrix.location(4))
for B in hb.basis[:3]:
    print(np.round(B, 3) + 0.0, "sum of diagonal", round(np.trace(B), 12))
