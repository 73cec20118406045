"""Variance comparisons between OLS and its unbiased quadratic perturbations.

For ``b_alpha = OLS + alpha * q(y)`` with ``q_i(y) = y'H_i y`` and a
direction ``c``::

    Var(c'b_alpha) = Var(c'OLS) + 2 alpha Cov(c'OLS, c'q) + alpha^2 Var(c'q)

so any nonzero covariance lets a small ``alpha`` beat OLS.  The covariance
is a contraction of ``d = X(X'X)^{-1}c`` and ``G = sum_i c_i H_i`` against
the third moments of the errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from gmlab.core import DesignMatrix, ols_map
from gmlab.errors import DimensionMismatch, FourthMomentsUnavailable
from gmlab.koopmann import QuadraticEstimator, _as_h_stack, make_perturbed_ols, solve_h_space
from gmlab.moments import (
    ENUMERATION_CAP,
    FiniteSupportDistribution,
    SkewedTwoPoint,
    independent_model,
    moments_of,
    product,
    quadratic_form_moments,
)

DEFAULT_SEED = 0x6D61726B
DEFAULT_SKEW_P = 0.2
DEGENERATE_QUAD_TOL = 1e-14
NOT_FOUND_TOL = 1e-10
ENUM_CHECK_RTOL = 1e-9
STRATEGIES = ("rule-i", "rule-ii", "tensor")

__all__ = [
    "ComparisonReport",
    "ExampleResult",
    "combined_h",
    "cov_general",
    "cov_independent",
    "enumerate_variance",
    "example_ex1",
    "example_ex2",
    "ols_weights",
    "optimize_alpha",
    "search_counterexample",
]


@dataclass
class ComparisonReport:
    c: np.ndarray
    cov_term: float
    quad_var: float
    alpha_star: float
    var_ols: float
    var_alpha_star: float
    improvement: float
    note: str | None = None
    beta: np.ndarray | None = None
    enumerated_var_ols: float | None = None
    enumerated_var_alpha_star: float | None = None
    recentering_valid: bool | None = None
    mc_confirmation: dict | None = None
    # what the numbers refer to, kept so a report can be re-simulated
    design: DesignMatrix | None = field(default=None, repr=False)
    estimator: QuadraticEstimator | None = field(default=None, repr=False)
    distribution: FiniteSupportDistribution | None = field(default=None, repr=False)
    label: str | None = None

    def variance_at(self, alpha):
        return self.var_ols + 2 * alpha * self.cov_term + alpha**2 * self.quad_var

    def to_dict(self):
        out = {}
        for f in fields(self):
            key, val = f.name, getattr(self, f.name)
            if key in ("design", "estimator", "distribution"):
                continue
            out[key] = val.tolist() if isinstance(val, np.ndarray) else val
        out["design"] = None if self.design is None else self.design.X.tolist()
        out["estimator"] = None if self.estimator is None else self.estimator.to_dict()
        out["distribution"] = None if self.distribution is None else self.distribution.to_dict()
        return out

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        design = data.pop("design", None)
        est = data.pop("estimator", None)
        dist = data.pop("distribution", None)
        data.pop("schema_version", None)
        c = np.asarray(data.pop("c"), dtype=float)
        beta = data.pop("beta", None)
        return cls(
            c=c,
            beta=None if beta is None else np.asarray(beta, dtype=float),
            design=None if design is None else DesignMatrix(np.array(design, dtype=float)),
            estimator=None if est is None else QuadraticEstimator.from_dict(est),
            distribution=None if dist is None else FiniteSupportDistribution.from_dict(dist),
            **data,
        )


def ols_weights(design, c):
    """``d = X (X'X)^{-1} c``, so that ``c'OLS(y) = d'y``."""
    c = np.atleast_1d(np.asarray(c, dtype=float))
    if c.shape != (design.k,):
        raise DimensionMismatch(f"c must have length k={design.k}")
    return ols_map(design).T @ c


def combined_h(c, H):
    """``G = sum_i c_i H_i``."""
    H = _as_h_stack(H)
    c = np.atleast_1d(np.asarray(c, dtype=float))
    if c.shape != (H.shape[0],):
        raise DimensionMismatch(f"c has length {c.shape[0]}, got {H.shape[0]} H matrices")
    return np.tensordot(c, H, axes=1)


def cov_general(c, H, design, third):
    """``Cov(c'OLS, c'q) = sum_jlm d_j G_lm E(e_j e_l e_m)`` for mean-zero errors, beta = 0."""
    d = ols_weights(design, c)
    G = combined_h(c, H)
    T = np.asarray(third, dtype=float)
    if G.shape != (design.n, design.n) or T.shape != (design.n,) * 3:
        raise DimensionMismatch("H and third-moment tensor must match the design's n")
    return float(np.einsum("j,lm,jlm->", d, G, T))


def cov_independent(c, H, design, mu3):
    """``sum_j d_j G_jj E(e_j^3)`` for independent mean-zero errors, beta = 0."""
    d = ols_weights(design, c)
    G = combined_h(c, H)
    mu3 = np.asarray(mu3, dtype=float)
    if G.shape != (design.n, design.n) or mu3.shape != (design.n,):
        raise DimensionMismatch("H and third moments must match the design's n")
    return float(np.sum(d * np.diag(G) * mu3))


def enumerate_variance(est, design, dist, c, beta=None):
    """Exact ``Var(c' est(y))`` for ``y = X beta + e``, ``e ~ dist``."""
    beta = np.zeros(design.k) if beta is None else np.asarray(beta, dtype=float)
    Y = (design.X @ beta)[:, None] + dist.support
    vals = np.asarray(c, dtype=float) @ est.estimate(Y)
    w = dist.weights
    return float(w @ (vals - w @ vals) ** 2)


def optimize_alpha(c, H, design, model, beta=None, distribution=None) -> ComparisonReport:
    """Variance-minimizing perturbation size for direction ``c``.

    The analytic terms assume ``beta = 0``.  When a finite-support law is
    available (``distribution`` or ``model.source``) the variances are also
    enumerated at the requested ``beta`` and ``recentering_valid`` records
    whether the ``beta = 0`` numbers still apply there.
    """
    if isinstance(model, FiniteSupportDistribution):
        distribution = distribution or model
        model = moments_of(model)
    if model.n != design.n:
        raise DimensionMismatch(f"model has n={model.n}, design has n={design.n}")
    model.require_error_model()
    c = np.atleast_1d(np.asarray(c, dtype=float))
    H = _as_h_stack(H, design.n)
    d = ols_weights(design, c)
    G = combined_h(c, H)
    var_ols = float(d @ model.second @ d)
    if model.independent:
        cov_term = cov_independent(c, H, design, model.third)
    else:
        cov_term = cov_general(c, H, design, model.third)
    qm = quadratic_form_moments(G, model)
    if qm.variance is None:
        raise FourthMomentsUnavailable("quadratic-part variance needs fourth moments or finite support")
    quad_var = qm.variance
    note = None
    if quad_var <= DEGENERATE_QUAD_TOL:
        alpha_star = 0.0
        note = "degenerate quadratic part: Var(c'q) is zero, alpha_star set to 0"
    else:
        alpha_star = -cov_term / quad_var
    var_alpha = var_ols + 2 * alpha_star * cov_term + alpha_star**2 * quad_var
    improvement = cov_term**2 / quad_var if note is None else 0.0
    report = ComparisonReport(
        c=c,
        cov_term=cov_term,
        quad_var=quad_var,
        alpha_star=alpha_star,
        var_ols=var_ols,
        var_alpha_star=var_alpha,
        improvement=improvement,
        note=note,
        beta=np.zeros(design.k) if beta is None else np.asarray(beta, dtype=float),
        design=design,
        estimator=QuadraticEstimator(ols_map(design), H, alpha_star),
    )
    dist = distribution if distribution is not None else model.source
    if dist is not None:
        dist = dist.shift(-dist.mean())
        ols_est = QuadraticEstimator(ols_map(design), H, 0.0)
        report.distribution = dist
        report.enumerated_var_ols = enumerate_variance(ols_est, design, dist, c, report.beta)
        report.enumerated_var_alpha_star = enumerate_variance(
            report.estimator, design, dist, c, report.beta
        )
        scale = max(1.0, abs(var_ols))
        report.recentering_valid = bool(
            abs(report.enumerated_var_alpha_star - var_alpha) <= ENUM_CHECK_RTOL * scale
            and abs(report.enumerated_var_ols - var_ols) <= ENUM_CHECK_RTOL * scale
        )
    return report


@dataclass
class ExampleResult:
    design: DesignMatrix
    estimator: QuadraticEstimator
    distribution: FiniteSupportDistribution
    report: ComparisonReport

    def __iter__(self):
        return iter((self.design, self.estimator, self.distribution, self.report))


def example_ex1(n=3, gamma=1.5, variance=1.0, alpha=None) -> ExampleResult:
    """Location model with ``H_1 = diag(1, -1, 0, ...)``.

    ``e_1`` is skewed two-point with third moment ``gamma``; the other errors
    are symmetric two-point, all with the same variance.  The estimator's
    ``alpha`` defaults to the optimal one.
    """
    if n < 2:
        raise ValueError("EX1 needs n >= 2")
    design = DesignMatrix.location(n)
    H1 = np.zeros((n, n))
    H1[0, 0], H1[1, 1] = 1.0, -1.0
    first = SkewedTwoPoint.from_third_moment(variance, gamma)
    rest = SkewedTwoPoint.symmetric(variance)
    dist = product([first] + [rest] * (n - 1))
    report = optimize_alpha([1.0], [H1], design, moments_of(dist), distribution=dist)
    report.label = f"ex1(n={n}, gamma={gamma!r})"
    a = report.alpha_star if alpha is None else alpha
    est = make_perturbed_ols(design, [H1], a)
    return ExampleResult(design, est, dist, report)


EX2_X = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
EX2_H = np.array(
    [
        [1.0, -1.0, 0.0, 0.0],
        [-1.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, -1.0, 1.0],
        [0.0, 0.0, 1.0, -1.0],
    ]
)


def example_ex2(p=DEFAULT_SKEW_P, variance=1.0, alpha=None) -> ExampleResult:
    """Balanced one-way layout, ``k = 2``, ``n = 4``, ``H_1 = H_2``, ``c = (1, 0)'``, i.i.d. errors."""
    design = DesignMatrix(EX2_X)
    H = [EX2_H, EX2_H]
    base = SkewedTwoPoint(variance, p)
    dist = product([base] * 4)
    report = optimize_alpha([1.0, 0.0], H, design, moments_of(dist), distribution=dist)
    report.label = f"ex2(p={p!r}, variance={variance!r})"
    a = report.alpha_star if alpha is None else alpha
    est = make_perturbed_ols(design, H, a)
    return ExampleResult(design, est, dist, report)


def _random_tensor_law(rng, n, symmetric):
    """Correlated finite-support law with mean zero and identity covariance."""
    m = 2 * n + 2
    while True:
        V = rng.standard_exponential(size=(n, m)) - rng.uniform(0, 2, size=(n, m))
        V += rng.normal(size=(n, 1)) * rng.standard_exponential(size=(1, m))
        w = rng.uniform(0.5, 1.5, size=m)
        if symmetric:
            V = np.hstack([V, -V])
            w = np.concatenate([w, w])
        w /= w.sum()
        V = V - (V @ w)[:, None]
        C = (V * w) @ V.T
        evals, evecs = np.linalg.eigh(C)
        if evals[0] > 1e-6 * evals[-1]:
            break
    W = evecs @ np.diag(evals**-0.5) @ evecs.T
    if symmetric:
        Z = W @ V[:, : V.shape[1] // 2]
        V = np.hstack([Z, -Z])
    else:
        V = W @ V
    return FiniteSupportDistribution(V, w)


def _maybe_product(margs):
    if math.prod(len(m.values) for m in margs) > ENUMERATION_CAP:
        return None
    return product(margs)


def search_counterexample(
    design,
    strategy="rule-i",
    budget=100,
    seed=DEFAULT_SEED,
    p=DEFAULT_SKEW_P,
    symmetric=False,
):
    """Random search for ``(H, c, F)`` with OLS beaten by a quadratic perturbation.

    ``rule-i`` pairs candidates with i.i.d. skewed errors, ``rule-ii`` skews a
    single coordinate ``j0`` and keeps the rest symmetric, and ``tensor``
    draws correlated finite-support errors with identity covariance.
    ``symmetric=True`` forces every error law to be symmetric.  Returns the
    report with the largest improvement (earliest candidate wins ties) or
    ``None`` when every candidate has ``|cov_term| <= 1e-10``.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    if budget < 1:
        raise ValueError("budget must be >= 1")
    basis = solve_h_space(design)
    if basis.dim == 0:
        return None
    n, k = design.n, design.k
    rng = np.random.default_rng(seed)
    skew = SkewedTwoPoint.symmetric() if symmetric else SkewedTwoPoint(1.0, p)
    sym = SkewedTwoPoint.symmetric().marginal()
    best = None
    for t in range(budget):
        H = np.array([basis.combine(rng.normal(size=basis.dim)) for _ in range(k)])
        c = rng.normal(size=k)
        c /= np.linalg.norm(c)
        margs = dist = None
        if strategy == "rule-i":
            margs = [skew.marginal()] * n
            model = independent_model(margs)
        elif strategy == "rule-ii":
            j0 = int(rng.integers(n))
            margs = [sym] * n
            margs[j0] = skew.marginal()
            model = independent_model(margs)
        else:
            dist = _random_tensor_law(rng, n, symmetric)
            model = moments_of(dist)
        report = optimize_alpha(c, H, design, model)
        if abs(report.cov_term) <= NOT_FOUND_TOL:
            continue
        if best is None or report.improvement > best[0].improvement:
            best = (report, t, c, H, model, margs, dist)
    if best is None:
        return None
    report, t, c, H, model, margs, dist = best
    if dist is None:
        dist = _maybe_product(margs)
    if dist is not None:
        # re-run with the law attached for the enumeration cross-check
        report = optimize_alpha(c, H, design, model, distribution=dist)
    report.label = f"search(strategy={strategy}, candidate={t})"
    return report
