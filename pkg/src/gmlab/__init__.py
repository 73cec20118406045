"""Unbiased linear-plus-quadratic estimators in fixed-design regression.

Exact variance comparisons against OLS/GLS, the classic counterexamples to
dropping linearity from Gauss-Markov under homoskedastic errors, and finite
probes that refute unbiasedness of black-box estimators over all error
covariance shapes.
"""

__version__ = "0.1.0"

from gmlab.core import (  # noqa: E402
    CovarianceSpec,
    DesignMatrix,
    LinearEstimator,
    LoewnerVerdict,
    gls,
    gls_map,
    linear_estimator_variance,
    loewner_compare,
    ols,
    ols_map,
)
from gmlab.errors import *  # noqa: E402,F401,F403
from gmlab.koopmann import (  # noqa: E402
    HBasis,
    QuadraticEstimator,
    eigen_diagnostic,
    make_perturbed_ols,
    sigma_sweep_bias,
    solve_h_space,
    verify_unbiased_f2zero,
)
from gmlab.lab import (  # noqa: E402
    ComparisonReport,
    cov_general,
    cov_independent,
    example_ex1,
    example_ex2,
    optimize_alpha,
    search_counterexample,
)
from gmlab.moments import (  # noqa: E402
    FiniteSupportDistribution,
    Marginal,
    MomentModel,
    SkewedTwoPoint,
    exact_expectation,
    moments_of,
    product,
    product_iid,
    quadratic_form_moments,
)
from gmlab.montecarlo import MonteCarloSummary, simulate_report  # noqa: E402
from gmlab.refuter import (  # noqa: E402
    BlackBoxEstimator,
    ProbeFamily,
    Refutation,
    additivity_deficit,
    check_fstar_unbiasedness,
    hansen_tilde,
    homogeneity_deficit,
    oddness_deficit,
    refute_f2_unbiasedness,
    step1_probes,
    step2_probe,
)
