import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gmlab.core import DesignMatrix
from gmlab.errors import FourthMomentsUnavailable, NotPositiveDefinite
from gmlab.koopmann import QuadraticEstimator, solve_h_space
from gmlab.lab import (
    ComparisonReport,
    EX2_H,
    EX2_X,
    cov_general,
    cov_independent,
    enumerate_variance,
    example_ex1,
    example_ex2,
    optimize_alpha,
    search_counterexample,
)
from gmlab.moments import (
    MomentModel,
    SkewedTwoPoint,
    independent_model,
    moments_of,
    product,
    product_iid,
)
from gmlab.core import ols_map

from conftest import random_design


@pytest.mark.parametrize("n", [2, 3, 5])
def test_ex1_closed_forms(n):
    # location model, H = diag(1, -1, 0, ...): cov = gamma/n, quad_var = mu4 - 1 = gamma^2
    gamma = 1.5
    r = example_ex1(n, gamma).report
    assert r.cov_term == pytest.approx(gamma / n, abs=1e-12)
    assert r.quad_var == pytest.approx(gamma**2, abs=1e-12)
    assert r.alpha_star == pytest.approx(-1 / (n * gamma), abs=1e-12)
    assert r.var_ols == pytest.approx(1 / n, abs=1e-12)
    assert r.improvement == pytest.approx(1 / n**2, abs=1e-12)
    assert r.var_alpha_star == pytest.approx(1 / n - 1 / n**2, abs=1e-12)
    assert r.recentering_valid


def test_ex1_symmetric_errors_have_no_gain():
    r = example_ex1(3, 0.0).report
    assert r.cov_term == pytest.approx(0.0, abs=1e-15)
    assert r.alpha_star == pytest.approx(0.0, abs=1e-15)


def test_ex2_reference_values():
    r = example_ex2().report
    # mu3 = 1.5 at p = 0.2; d = (1/2, 1/2, 0, 0), G = H, diag(H) = (1, 1, -1, -1)
    assert r.cov_term == pytest.approx(1.5, abs=1e-12)
    # quad_var = sum h_jj^2 (mu4 - 1) + 2 sum_{j != l} h_jl^2 = 4 * 2.25 + 2 * 4
    assert r.quad_var == pytest.approx(17.0, abs=1e-12)
    assert r.alpha_star == pytest.approx(-1.5 / 17, abs=1e-12)
    assert r.var_ols == pytest.approx(0.5, abs=1e-12)
    assert r.improvement == pytest.approx(2.25 / 17, abs=1e-12)


def test_ex2_constants_are_feasible():
    hb = solve_h_space(DesignMatrix(EX2_X))
    assert hb.residual(EX2_H) < 1e-12


def test_variance_minimized_at_alpha_star_on_grid():
    """Brute force: exact variance over a fine alpha grid."""
    for ex in (example_ex1(3, 1.5), example_ex2()):
        r = ex.report
        base = QuadraticEstimator(r.estimator.A, r.estimator.H, 0.0)
        d = r.c @ base.A
        Y = ex.distribution.support
        w = ex.distribution.weights
        lin = d @ Y
        quad = r.c @ base.quadratic_part(Y)
        grid = np.arange(-20000, 20001) * 1e-4
        vals = lin[None, :] + grid[:, None] * quad[None, :]
        means = vals @ w
        var = ((vals - means[:, None]) ** 2) @ w
        best = grid[np.argmin(var)]
        assert abs(best - r.alpha_star) <= 1e-4
        assert var.min() == pytest.approx(r.var_alpha_star, abs=1e-7)


def test_variance_identity_against_enumeration(rng):
    for _ in range(30):
        design = random_design(rng, int(rng.integers(3, 6)))
        hb = solve_h_space(design)
        if hb.dim == 0:
            continue
        H = np.array([hb.combine(rng.normal(size=hb.dim)) for _ in range(design.k)])
        c = rng.normal(size=design.k)
        margs = [SkewedTwoPoint(rng.uniform(0.5, 2), rng.uniform(0.1, 0.9)) for _ in range(design.n)]
        dist = product(margs)
        report = optimize_alpha(c, H, design, independent_model(margs))
        for alpha in (0.0, report.alpha_star, rng.normal()):
            est = QuadraticEstimator(ols_map(design), H, alpha)
            exact = enumerate_variance(est, design, dist, c)
            assert report.variance_at(alpha) == pytest.approx(exact, rel=1e-9, abs=1e-12)


def test_general_and_independent_cov_agree(rng):
    design = random_design(rng, 4, 2)
    hb = solve_h_space(design)
    H = np.array([hb.combine(rng.normal(size=hb.dim)) for _ in range(2)])
    c = rng.normal(size=2)
    model = moments_of(product([SkewedTwoPoint(1.0, p) for p in (0.1, 0.3, 0.6, 0.8)]))
    a = cov_independent(c, H, design, model.third)
    b = cov_general(c, H, design, model.third_tensor())
    assert a == pytest.approx(b, abs=1e-12)


def test_tensor_law_report_matches_enumeration(rng):
    from gmlab.lab import _random_tensor_law

    design = random_design(rng, 4, 1)
    hb = solve_h_space(design)
    H = hb.combine(rng.normal(size=hb.dim))[None]
    dist = _random_tensor_law(rng, 4, symmetric=False)
    np.testing.assert_allclose(dist.covariance(), np.eye(4), atol=1e-10)
    r = optimize_alpha([1.0], H, design, dist)
    assert r.recentering_valid
    assert r.enumerated_var_alpha_star == pytest.approx(r.var_alpha_star, rel=1e-9)


def test_recentering_breaks_away_from_zero_beta():
    ex = example_ex1(3, 1.5)
    r = optimize_alpha([1.0], ex.estimator.H, ex.design, ex.distribution, beta=[2.0])
    # y'Hy picks up cross terms with X beta unless H X = 0; here H 1 != 0
    assert r.recentering_valid is False


def test_symmetric_law_cov_vanishes(rng):
    design = random_design(rng, 4, 2)
    hb = solve_h_space(design)
    H = np.array([hb.combine(rng.normal(size=hb.dim)) for _ in range(2)])
    model = moments_of(product_iid(SkewedTwoPoint.symmetric(), 4))
    r = optimize_alpha(rng.normal(size=2), H, design, model)
    assert abs(r.cov_term) < 1e-14
    assert r.improvement == pytest.approx(0.0, abs=1e-14)


def test_degenerate_quadratic_part():
    design = DesignMatrix.location(3)
    r = optimize_alpha([1.0], np.zeros((1, 3, 3)), design, product_iid(SkewedTwoPoint(1, 0.2), 3))
    assert r.alpha_star == 0.0 and r.note and r.improvement == 0.0


def test_missing_fourth_moments():
    design = DesignMatrix.location(2)
    model = MomentModel(np.eye(2), np.zeros((2, 2, 2)))
    with pytest.raises(FourthMomentsUnavailable):
        optimize_alpha([1.0], np.diag([1.0, -1.0])[None], design, model)


def test_singular_covariance_rejected():
    design = DesignMatrix.location(2)
    model = MomentModel(np.diag([1.0, 0.0]), np.zeros(2), np.ones(2), independent=True)
    with pytest.raises(NotPositiveDefinite):
        optimize_alpha([1.0], np.diag([1.0, -1.0])[None], design, model)


def test_report_roundtrip():
    r = example_ex2().report
    back = ComparisonReport.from_dict(r.to_dict())
    assert back.alpha_star == r.alpha_star
    np.testing.assert_array_equal(back.distribution.support, r.distribution.support)
    np.testing.assert_array_equal(back.estimator.H, r.estimator.H)


@pytest.mark.parametrize("strategy", ["rule-i", "rule-ii", "tensor"])
def test_search_finds_improvement(strategy):
    r = search_counterexample(DesignMatrix(EX2_X), strategy, budget=20, seed=7)
    assert r is not None
    assert r.improvement > 0 and r.var_alpha_star < r.var_ols
    if r.recentering_valid is not None:
        assert r.recentering_valid


@pytest.mark.parametrize("strategy", ["rule-i", "rule-ii", "tensor"])
def test_search_symmetric_errors_not_found(strategy):
    assert search_counterexample(DesignMatrix(EX2_X), strategy, budget=10, seed=3, symmetric=True) is None


def test_search_is_deterministic():
    a = search_counterexample(DesignMatrix.location(4), "rule-ii", budget=15, seed=11)
    b = search_counterexample(DesignMatrix.location(4), "rule-ii", budget=15, seed=11)
    assert a.to_dict() == b.to_dict()


def test_search_rejects_bad_strategy():
    with pytest.raises(ValueError):
        search_counterexample(DesignMatrix.location(3), "magic")


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.2, 3.0))
def test_ex2_cov_scales_with_skewness(p, var):
    r = example_ex2(p, var).report
    law = SkewedTwoPoint(var, p)
    assert r.cov_term == pytest.approx(law.third_moment, rel=1e-9, abs=1e-12)
    assert r.var_alpha_star <= r.var_ols + 1e-12
    assert math.isclose(r.improvement, r.cov_term**2 / r.quad_var, rel_tol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6), st.floats(0.05, 0.95), st.floats(0.05, 0.95))
def test_location_cov_is_scaled_third_moment_difference(n, p1, p2):
    # H = diag(1, -1, 0, ...) on the location design: cov = (mu3_1 - mu3_2) / n
    H = np.zeros((n, n))
    H[0, 0], H[1, 1] = 1.0, -1.0
    margs = [SkewedTwoPoint(1.0, p1), SkewedTwoPoint(1.0, p2)] + [SkewedTwoPoint(1.0, 0.3)] * (n - 2)
    r = optimize_alpha([1.0], H[None], DesignMatrix.location(n), independent_model(margs))
    expected = (margs[0].third_moment - margs[1].third_moment) / n
    assert r.cov_term == pytest.approx(expected, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.05, 0.95))
def test_ex2_cov_is_mean_of_first_two_third_moments(p1, p2):
    margs = [SkewedTwoPoint(1.0, p1), SkewedTwoPoint(1.0, p2), SkewedTwoPoint(1.0, 0.4), SkewedTwoPoint(1.0, 0.6)]
    r = optimize_alpha([1.0, 0.0], [EX2_H, EX2_H], DesignMatrix(EX2_X), independent_model(margs))
    assert r.cov_term == pytest.approx((margs[0].third_moment + margs[1].third_moment) / 2, abs=1e-12)
