import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gmlab.errors import NotPositiveDefinite, SupportTooLarge
from gmlab.moments import (
    FiniteSupportDistribution,
    Marginal,
    MomentModel,
    SkewedTwoPoint,
    exact_expectation,
    independent_model,
    moments_of,
    product,
    product_iid,
    quadratic_form_moments,
    quadratic_form_variance_independent,
)


def _random_marginal(rng):
    size = int(rng.integers(2, 4))
    vals = rng.normal(size=size) * rng.uniform(0.5, 2.0)
    probs = rng.dirichlet(np.ones(size))
    probs = probs / math.fsum(probs)
    return Marginal(tuple(vals), tuple(probs))


def test_skewed_two_point_reference_values():
    law = SkewedTwoPoint(1.0, 0.2)
    assert law.values == pytest.approx((2.0, -0.5), abs=1e-15)
    assert law.third_moment == pytest.approx(1.5, abs=1e-12)
    assert law.fourth_moment == pytest.approx(3.25, abs=1e-12)
    m = law.marginal()
    assert m.mean == pytest.approx(0.0, abs=1e-15)
    assert m.central_moment(2) == pytest.approx(1.0, abs=1e-14)
    assert m.central_moment(3) == pytest.approx(1.5, abs=1e-14)
    assert m.central_moment(4) == pytest.approx(3.25, abs=1e-14)


def test_symmetric_two_point():
    law = SkewedTwoPoint.symmetric(4.0)
    assert law.values == pytest.approx((2.0, -2.0))
    assert law.third_moment == pytest.approx(0.0, abs=1e-15)
    assert law.fourth_moment == pytest.approx(16.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.1, 5.0), st.floats(-4.0, 4.0))
def test_from_third_moment_roundtrip(var, gamma):
    law = SkewedTwoPoint.from_third_moment(var, gamma * var**1.5)
    m = law.marginal()
    assert m.mean == pytest.approx(0.0, abs=1e-12 * var**0.5 * 10)
    assert m.central_moment(2) == pytest.approx(var, rel=1e-10)
    assert m.central_moment(3) == pytest.approx(gamma * var**1.5, rel=1e-8, abs=1e-10)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.02, 0.98), st.floats(0.1, 4.0))
def test_two_point_closed_forms_match_enumeration(p, var):
    law = SkewedTwoPoint(var, p)
    m = law.marginal()
    assert law.third_moment == pytest.approx(m.central_moment(3), rel=1e-9, abs=1e-12)
    assert law.fourth_moment == pytest.approx(m.central_moment(4), rel=1e-9)


def test_invalid_parameters():
    with pytest.raises(ValueError):
        SkewedTwoPoint(1.0, 0.0)
    with pytest.raises(ValueError):
        SkewedTwoPoint(-1.0, 0.5)
    with pytest.raises(ValueError):
        Marginal((1.0, 2.0), (0.5, 0.6))
    with pytest.raises(ValueError):
        FiniteSupportDistribution(np.zeros((2, 2)), [0.3, 0.3])


def test_product_ordering_and_weights():
    dist = product([Marginal((0.0, 1.0), (0.25, 0.75)), Marginal((5.0, 6.0), (0.5, 0.5))])
    np.testing.assert_array_equal(dist.support, [[0, 0, 1, 1], [5, 6, 5, 6]])
    np.testing.assert_allclose(dist.weights, [0.125, 0.125, 0.375, 0.375])
    assert dist.independent


def test_product_cap():
    with pytest.raises(SupportTooLarge):
        product_iid(SkewedTwoPoint(), 5, cap=16)


def test_exact_expectation_linear_and_quadratic(rng):
    m = [_random_marginal(rng) for _ in range(3)]
    dist = product(m)
    mean = exact_expectation(dist, lambda v: v)
    np.testing.assert_allclose(mean, [mg.mean for mg in m], atol=1e-13)
    cov = dist.covariance()
    np.testing.assert_allclose(np.diag(cov), [mg.central_moment(2) for mg in m], atol=1e-12)
    np.testing.assert_allclose(cov - np.diag(np.diag(cov)), 0.0, atol=1e-12)


def test_shift_and_linear_image(rng):
    dist = product_iid(SkewedTwoPoint(1.0, 0.3), 3)
    shifted = dist.shift([1.0, 2.0, 3.0])
    np.testing.assert_allclose(shifted.mean(), [1, 2, 3], atol=1e-14)
    assert shifted.independent
    T = rng.normal(size=(2, 3))
    img = dist.linear_image(T)
    np.testing.assert_allclose(img.covariance(), T @ T.T, atol=1e-12)


def test_distribution_dict_roundtrip():
    dist = product_iid(SkewedTwoPoint(2.0, 0.2), 2)
    back = FiniteSupportDistribution.from_dict(dist.to_dict())
    np.testing.assert_array_equal(back.support, dist.support)
    np.testing.assert_array_equal(back.weights, dist.weights)
    assert back.independent


def test_sampling_frequencies():
    dist = FiniteSupportDistribution(np.array([[0.0, 1.0, 2.0]]), [0.2, 0.5, 0.3])
    draws = dist.sample(np.random.default_rng(1), 200_000)
    assert draws.shape == (200_000, 1)
    freq = np.array([np.mean(draws[:, 0] == v) for v in (0, 1, 2)])
    np.testing.assert_allclose(freq, [0.2, 0.5, 0.3], atol=0.005)


def test_independent_model_matches_enumeration(rng):
    m = [_random_marginal(rng) for _ in range(4)]
    a = independent_model(m)
    b = moments_of(product(m))
    np.testing.assert_allclose(a.second, b.second, atol=1e-12)
    np.testing.assert_allclose(a.third, b.third, atol=1e-12)
    np.testing.assert_allclose(a.fourth_diag, b.fourth_diag, atol=1e-12)


def test_third_tensor_of_dependent_law(rng):
    support = rng.normal(size=(3, 6))
    w = rng.dirichlet(np.ones(6))
    dist = FiniteSupportDistribution(support, w / math.fsum(w))
    model = moments_of(dist)
    E = support - dist.mean()[:, None]
    for j, l, m in itertools.product(range(3), repeat=3):
        assert model.third[j, l, m] == pytest.approx(
            math.fsum(w[i] / math.fsum(w) * E[j, i] * E[l, i] * E[m, i] for i in range(6)), abs=1e-12
        )


def test_model_validation():
    with pytest.raises(NotPositiveDefinite):
        MomentModel(np.diag([1.0, -1.0]), np.zeros(2), independent=True)
    with pytest.raises(ValueError):
        MomentModel(np.eye(2), np.zeros(2), np.array([0.5, 1.0]), independent=True)
    with pytest.raises(ValueError):
        T = np.zeros((2, 2, 2))
        T[0, 0, 1] = 1.0
        MomentModel(np.eye(2), T)
    singular = MomentModel(np.diag([1.0, 0.0]), np.zeros(2), independent=True)
    with pytest.raises(NotPositiveDefinite):
        singular.require_error_model()


def test_model_dict_roundtrip(rng):
    model = moments_of(product([_random_marginal(rng) for _ in range(2)]))
    back = MomentModel.from_dict(model.to_dict())
    np.testing.assert_array_equal(back.third, model.third)
    assert back.independent


def test_quadratic_variance_formula_matches_enumeration_on_many_instances(rng):
    """Closed form against exact enumeration on 150 random independent laws."""
    for _ in range(150):
        n = int(rng.integers(1, 5))
        margs = [_random_marginal(rng) for _ in range(n)]
        # centre each marginal so the formula's mean-zero assumption holds
        margs = [Marginal(tuple(v - mg.mean for v in mg.values), mg.probs) for mg in margs]
        dist = product(margs)
        B = rng.normal(size=(n, n))
        H = B + B.T
        E = dist.support
        q = np.einsum("ji,jl,li->i", E, H, E)
        mean = math.fsum(dist.weights * q)
        oracle = math.fsum(dist.weights * (q - mean) ** 2)
        mu2 = [mg.central_moment(2) for mg in margs]
        mu4 = [mg.central_moment(4) for mg in margs]
        got = quadratic_form_variance_independent(H, mu2, mu4)
        assert got == pytest.approx(oracle, rel=1e-9, abs=1e-12)


def test_quadratic_form_moments_paths(rng):
    margs = [SkewedTwoPoint(1.0, 0.2), SkewedTwoPoint(2.0, 0.7)]
    H = np.array([[1.0, 2.0], [2.0, -1.0]])
    analytic = quadratic_form_moments(H, independent_model(margs))
    enumerated = quadratic_form_moments(H, moments_of(product(margs)))
    assert analytic.mean == pytest.approx(1.0 - 2.0)
    assert analytic.variance == pytest.approx(enumerated.variance, rel=1e-12)
    bare = MomentModel(np.eye(2), np.zeros((2, 2, 2)))
    assert quadratic_form_moments(H, bare).variance is None


def test_gaussian_like_quadratic_variance():
    # symmetric +-1 coordinates: mu4 - mu2^2 = 0, so only the off-diagonal term survives
    H = np.array([[3.0, 1.0], [1.0, -2.0]])
    got = quadratic_form_variance_independent(H, [1.0, 1.0], [1.0, 1.0])
    assert got == pytest.approx(4.0)
