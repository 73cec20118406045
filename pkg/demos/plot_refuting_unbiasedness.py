"""
Catching bias with small probe distributions
=============================================

A quadratic perturbation of least squares is unbiased when the error
covariance is a multiple of the identity.  Let the covariance shape vary and
the bias appears; a handful of finite-support laws are enough to show it.
"""

import numpy as np

from gmlab import DesignMatrix, make_perturbed_ols, sigma_sweep_bias, solve_h_space
from gmlab.core import ols_map
from gmlab.refuter import check_fstar_unbiasedness, hansen_tilde, refute_f2_unbiasedness

rng = np.random.default_rng(0)
design = DesignMatrix(np.column_stack([np.ones(5), rng.normal(size=5)]))
basis = solve_h_space(design)
H = np.array([basis.combine(rng.normal(size=basis.dim)) for _ in range(2)])
est = make_perturbed_ols(design, H, alpha=1.0)

ref = refute_f2_unbiasedness(est, design, budget=50)
print("probe", ref.kind, "expectation", ref.expectation, "beta", ref.beta)

###############################################################################
# The sweep over ``I + eps * E_jl`` names the covariance shapes that do it.

for probe in sigma_sweep_bias(est)[:3]:
    print(probe.j, probe.l, probe.bias)

###############################################################################
# Least squares itself survives every probe.

print("OLS refuted:", refute_f2_unbiasedness(ols_map(design), design) is not None)

###############################################################################
# The leave-one-out estimator is unbiased under independent coordinates of
# any variances, and biased once two coordinates are correlated.

chk = check_fstar_unbiasedness(hansen_tilde(design, 0, 1), design)
print("independent bias", chk.max_independent_bias)
print("correlated bias", chk.correlated.norm)
