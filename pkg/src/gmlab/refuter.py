"""Probing black-box estimators with finite-support error laws.

An estimator unbiased under every mean-zero law with positive definite
covariance must average to zero under each probe built here.  Steps:

* ``step1_probes(z)``: ``(I, -I)`` and ``(I, -I, z, -z)`` with uniform
  weights; their difference isolates ``b(z) + b(-z)``.
* ``step2_probe(y, z)``: ``(diag(y + z), -y, -z, I, -I)`` with uniform
  weights; combined with oddness it isolates ``b(y) + b(z) - b(y + z)``.

Finite probing can refute unbiasedness but never prove it.  Continuity of an
additive measurable map (needed to pass from rational to real scalars) is
not something a finite check can see; only oddness, additivity and rational
homogeneity at the probed points are tested.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np
from scipy import linalg as sla

from gmlab.core import RANK_TOL, CovarianceSpec, LinearEstimator, gls_map, ols_map
from gmlab.errors import LeaveOneOutRankDeficient, RankDeficient
from gmlab.koopmann import QuadraticEstimator
from gmlab.moments import FiniteSupportDistribution, Marginal, product

REFUTE_TOL = 1e-8
FSTAR_TOL = 1e-10
PROBE_GRID = 3
DEFAULT_RATIOS = (Fraction(2), Fraction(3), Fraction(1, 2), Fraction(1, 3), Fraction(-1), Fraction(5, 7))
DEFAULT_SEED = 0x6D61726B

__all__ = [
    "BlackBoxEstimator",
    "FStarCheck",
    "ProbeFamily",
    "Refutation",
    "additivity_deficit",
    "as_black_box",
    "check_fstar_unbiasedness",
    "hansen_tilde",
    "homogeneity_deficit",
    "mixture_identity_holds",
    "oddness_deficit",
    "refute_f2_unbiasedness",
    "step1_probes",
    "step2_probe",
    "builtin_estimator",
]


@dataclass(frozen=True)
class BlackBoxEstimator:
    """A deterministic map from observations ``y`` (length n) to estimates (length k).

    ``serial=True`` declares that ``eval`` must not be called concurrently.
    ``batch``, when given, evaluates an ``(n, m)`` matrix of observations at
    once and must agree column-by-column with ``eval``.
    """

    eval: Callable
    label: str = "estimator"
    serial: bool = False
    batch: Callable | None = field(default=None, repr=False, compare=False)
    meta: dict = field(default_factory=dict, compare=False)

    def __call__(self, y):
        return np.atleast_1d(np.asarray(self.eval(np.asarray(y, dtype=float)), dtype=float))

    def evaluate_many(self, Y):
        """Estimates for the columns of ``Y``, as a ``(k, m)`` array."""
        Y = np.asarray(Y, dtype=float)
        if self.batch is not None:
            return np.atleast_2d(np.asarray(self.batch(Y), dtype=float))
        return np.stack([self(Y[:, i]) for i in range(Y.shape[1])], axis=1)

    def expectation(self, dist: FiniteSupportDistribution):
        """Exact ``sum_i alpha_i b(v_i)``."""
        return self.evaluate_many(dist.support) @ dist.weights


def as_black_box(est, label=None):
    """Wrap a LinearEstimator, QuadraticEstimator or plain matrix."""
    if isinstance(est, BlackBoxEstimator):
        return est
    if isinstance(est, QuadraticEstimator):
        return BlackBoxEstimator(est.estimate, label or "quadratic", batch=est.estimate)
    if isinstance(est, LinearEstimator):
        A = est.A
    else:
        A = np.atleast_2d(np.asarray(est, dtype=float))
    return BlackBoxEstimator(lambda y: A @ y, label or "linear", batch=lambda Y: A @ Y)


@dataclass(frozen=True)
class ProbeFamily:
    """Mean-zero finite-support laws whose support spans R^n."""

    probes: tuple

    def __post_init__(self):
        for i, p in enumerate(self.probes):
            n = p.n
            if np.linalg.matrix_rank(p.support) != n:
                raise RankDeficient(f"probe {i} support does not span R^{n}")
            if np.max(np.abs(p.mean())) > 1e-12 * max(1.0, np.max(np.abs(p.support))):
                raise ValueError(f"probe {i} does not have mean zero")

    def __iter__(self):
        return iter(self.probes)

    def __len__(self):
        return len(self.probes)

    def __getitem__(self, i):
        return self.probes[i]


def step1_probes(z) -> ProbeFamily:
    """``(I, -I)`` with weights ``1/(2n)`` and ``(I, -I, z, -z)`` with weights ``1/(2(n+1))``."""
    z = np.asarray(z, dtype=float)
    n = z.shape[0]
    eye = np.eye(n)
    mu1 = FiniteSupportDistribution(np.hstack([eye, -eye]), np.full(2 * n, 1.0 / (2 * n)))
    mu2 = FiniteSupportDistribution(
        np.hstack([eye, -eye, z[:, None], -z[:, None]]), np.full(2 * n + 2, 1.0 / (2 * (n + 1)))
    )
    return ProbeFamily((mu1, mu2))


def mixture_identity_holds(n):
    """Check ``mu2 = n/(n+1) mu1 + 1/(2(n+1)) (delta_z + delta_-z)`` weight by weight, exactly."""
    w1 = Fraction(1, 2 * n)
    w2 = Fraction(1, 2 * (n + 1))
    lam = Fraction(n, n + 1)
    tail = Fraction(1, 2 * (n + 1))
    total = 2 * n * lam * w1 + 2 * tail
    return lam * w1 == w2 and tail == w2 and total == 1


def step2_probe(y, z) -> FiniteSupportDistribution:
    """``(diag(y + z), -y, -z, I, -I)`` with uniform weights ``1/(3n+2)``."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    n = y.shape[0]
    eye = np.eye(n)
    V = np.hstack([np.diag(y + z), -y[:, None], -z[:, None], eye, -eye])
    return FiniteSupportDistribution(V, np.full(3 * n + 2, 1.0 / (3 * n + 2)))


def oddness_deficit(est, z):
    """``b(z) + b(-z)``."""
    est = as_black_box(est)
    z = np.asarray(z, dtype=float)
    return est(z) + est(-z)


def additivity_deficit(est, y, z):
    """``b(y) + b(z) - b(y + z)``."""
    est = as_black_box(est)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    return est(y) + est(z) - est(y + z)


def homogeneity_deficit(est, z, ratios=DEFAULT_RATIOS):
    """``max_r ||b(r z) - r b(z)||`` over rational ratios ``r``."""
    est = as_black_box(est)
    z = np.asarray(z, dtype=float)
    base = est(z)
    worst = 0.0
    for r in ratios:
        r = Fraction(r)
        if r.denominator == 0:
            raise ZeroDivisionError("ratio denominator must be nonzero")
        rf = r.numerator / r.denominator
        worst = max(worst, float(np.linalg.norm(est(rf * z) - rf * base)))
    return worst


@dataclass
class Refutation:
    """A probe law under which the estimator's exact mean differs from ``beta``."""

    probe: FiniteSupportDistribution
    beta: np.ndarray
    expectation: np.ndarray
    norm: float
    kind: str = ""

    def to_dict(self):
        return {
            "kind": self.kind,
            "beta": self.beta.tolist(),
            "expectation": self.expectation.tolist(),
            "norm": self.norm,
            "probe": self.probe.to_dict(),
        }


def _grid(rng, size):
    return rng.integers(-PROBE_GRID, PROBE_GRID + 1, size=size).astype(float)


def _check(est, dist, beta, tol, kind):
    mean = est.expectation(dist)
    dev = float(np.linalg.norm(mean - beta))
    scale = max(1.0, float(np.max(np.abs(beta))))
    if dev > tol * scale:
        return Refutation(dist, beta, mean, dev, kind)
    return None


def refute_f2_unbiasedness(est, design, budget=50, seed=DEFAULT_SEED, tol=REFUTE_TOL):
    """Search the step-1/step-2 probe families for a biased expectation.

    Each round draws ``y, z`` from the integer grid ``{-3..3}^n`` and an
    integer ``beta``; the probes are shifted by ``X beta`` so the expected
    answer is ``beta``.  Returns the first Refutation, or None when nothing
    was found within ``budget`` rounds.
    """
    est = as_black_box(est)
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = np.random.default_rng(seed)
    n, k = design.n, design.k
    for t in range(budget):
        y = _grid(rng, n)
        z = _grid(rng, n)
        beta = np.zeros(k) if t == 0 else _grid(rng, k)
        shift = design.X @ beta
        mu1, mu2 = step1_probes(z)
        for kind, probe in (("step1-base", mu1), ("step1-z", mu2), ("step2", step2_probe(y, z))):
            ref = _check(est, probe.shift(shift), beta, tol, f"{kind}@round{t}")
            if ref is not None:
                return ref
    return None


def hansen_tilde(design, i, j, a=None) -> BlackBoxEstimator:
    """``OLS(y) + y_i (y_j - x_j' OLS_{-i}(y)) a`` (indices are 0-based).

    ``OLS_{-i}`` is least squares with observation ``i`` deleted.  ``meta``
    records whether the estimator collapses to OLS for this design.
    """
    n, k = design.n, design.k
    if not (0 <= i < n and 0 <= j < n) or i == j:
        raise ValueError(f"need distinct row indices in [0, {n}), got i={i}, j={j}")
    a = np.ones(k) if a is None else np.atleast_1d(np.asarray(a, dtype=float))
    if a.shape != (k,) or not np.any(a != 0):
        raise ValueError("a must be a nonzero k-vector")
    Xi = np.delete(design.X, i, axis=0)
    sv = np.linalg.svd(Xi, compute_uv=False)
    if sv[-1] <= RANK_TOL * sv[0]:
        raise LeaveOneOutRankDeficient(f"design without row {i} loses column rank")
    q, rr = np.linalg.qr(Xi)
    loo_map = sla.solve_triangular(rr, q.T)
    # residual y_j - x_j' OLS_{-i}(y) as a linear functional r'y (r_i = 0)
    keep = np.delete(np.arange(n), i)
    r = np.zeros(n)
    r[keep] = -design.X[j] @ loo_map
    r[j] += 1.0
    A = ols_map(design)
    r.setflags(write=False)

    def batch(Y):
        return A @ Y + np.outer(a, Y[i] * (r @ Y))

    def single(y):
        return A @ y + y[i] * (r @ y) * a

    coincides = bool(np.max(np.abs(r)) <= 1e-12 * max(1.0, np.max(np.abs(design.X))))
    meta = {"i": i, "j": j, "a": a.tolist(), "residual_weights": r.tolist(), "coincides_with_ols": coincides}
    return BlackBoxEstimator(single, f"hansen-tilde(i={i}, j={j})", batch=batch, meta=meta)


@dataclass
class FStarCheck:
    """Outcome of the independent-errors check and the correlated search."""

    independent: Refutation | None
    correlated: Refutation | None
    max_independent_bias: float
    models_checked: int

    @property
    def passed(self):
        return self.independent is None


def _random_marginal(rng):
    """Mean-zero marginal on two or three points with variance bounded away from 0."""
    while True:
        size = int(rng.integers(2, 4))
        vals = rng.normal(size=size) * rng.uniform(0.5, 2.0)
        probs = rng.uniform(0.2, 1.0, size=size)
        probs /= probs.sum()
        vals = vals - vals @ probs
        if vals**2 @ probs > 1e-2:
            return Marginal(tuple(vals), tuple(probs))


def _random_correlated_law(rng, n, i, j):
    """Mean-zero law with positive definite covariance where ``e_i`` and ``e_j`` are coupled."""
    m = 2 * n + 2
    while True:
        V = rng.normal(size=(n, m))
        V[j] += rng.uniform(0.5, 1.5) * V[i]
        w = rng.uniform(0.5, 1.5, size=m)
        w /= w.sum()
        V -= (V @ w)[:, None]
        if np.linalg.matrix_rank(V) == n:
            return FiniteSupportDistribution(V, w)


def check_fstar_unbiasedness(est, design, budget=50, seed=DEFAULT_SEED, i=None, j=None):
    """Exact bias of ``est`` under independent-coordinate and correlated laws.

    Independent phase: ``budget`` product laws with random mean-zero marginals
    (not necessarily equal variances) and random ``beta``; any bias above
    1e-10 is recorded as a failure.  Correlated phase: up to ``budget`` laws
    coupling coordinates ``i`` and ``j`` (taken from ``est.meta`` when
    present), stopping at the first bias above 1e-8.
    """
    bb = as_black_box(est)
    if budget < 1:
        raise ValueError("budget must be >= 1")
    n, k = design.n, design.k
    i = bb.meta.get("i", 0) if i is None else i
    j = bb.meta.get("j", 1) if j is None else j
    rng = np.random.default_rng(seed)
    worst = 0.0
    independent = None
    for t in range(budget):
        beta = rng.normal(size=k)
        law = product([_random_marginal(rng) for _ in range(n)]).shift(design.X @ beta)
        mean = bb.expectation(law)
        dev = float(np.linalg.norm(mean - beta))
        worst = max(worst, dev)
        if dev > FSTAR_TOL and independent is None:
            independent = Refutation(law, beta, mean, dev, f"independent@{t}")
    correlated = None
    for t in range(budget):
        beta = rng.normal(size=k)
        law = _random_correlated_law(rng, n, i, j).shift(design.X @ beta)
        ref = _check(bb, law, beta, REFUTE_TOL, f"correlated@{t}")
        if ref is not None:
            correlated = ref
            break
    return FStarCheck(independent, correlated, worst, budget)


def builtin_estimator(name, design, sigma=None, i=0, j=1, a=None):
    """Estimator by CLI name: ``ols``, ``gls`` or ``hansen-tilde``."""
    if name == "ols":
        return as_black_box(LinearEstimator(ols_map(design)), "ols")
    if name == "gls":
        cov = sigma if isinstance(sigma, CovarianceSpec) else CovarianceSpec(
            1.0, np.eye(design.n) if sigma is None else sigma
        )
        return as_black_box(LinearEstimator(gls_map(design, cov)), "gls")
    if name == "hansen-tilde":
        return hansen_tilde(design, i, j, a)
    raise ValueError(f"unknown builtin estimator {name!r}")

