"""Error distributions, represented by their moments or by finite support.

A :class:`FiniteSupportDistribution` is an exact oracle: every expectation is
a finite weighted sum over the support points.  A :class:`MomentModel`
carries just the moments the analytic variance formulas need.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from gmlab.core import symmetrize
from gmlab.errors import DimensionMismatch, NotPositiveDefinite, SupportTooLarge

ENUMERATION_CAP = 2**20
TENSOR_MAX_N = 32
WEIGHT_SUM_TOL = 1e-12

__all__ = [
    "ENUMERATION_CAP",
    "FiniteSupportDistribution",
    "Marginal",
    "MomentModel",
    "QuadraticFormMoments",
    "SkewedTwoPoint",
    "exact_expectation",
    "independent_model",
    "moments_of",
    "product",
    "product_iid",
    "quadratic_form_moments",
    "quadratic_form_variance_independent",
]


@dataclass(frozen=True)
class Marginal:
    """A one-dimensional finite distribution (values with probabilities)."""

    values: tuple
    probs: tuple

    def __post_init__(self):
        v = tuple(float(x) for x in self.values)
        p = tuple(float(x) for x in self.probs)
        if len(v) != len(p) or not v:
            raise DimensionMismatch("values and probs must be non-empty and equal length")
        if min(p) <= 0 or abs(math.fsum(p) - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError("marginal probabilities must be positive and sum to 1")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "probs", p)

    def moment(self, r):
        return math.fsum(q * x**r for x, q in zip(self.values, self.probs))

    def central_moment(self, r):
        mu = self.mean
        return math.fsum(q * (x - mu) ** r for x, q in zip(self.values, self.probs))

    @property
    def mean(self):
        return self.moment(1)


@dataclass(frozen=True)
class SkewedTwoPoint:
    """Mean-zero two-point law: ``a = s*sqrt((1-p)/p)`` w.p. ``p``, else ``b = -s*sqrt(p/(1-p))``.

    ``p = 1/2`` gives the symmetric ``+-s`` distribution.
    """

    variance: float = 1.0
    p: float = 0.5

    def __post_init__(self):
        if not self.variance > 0:
            raise ValueError(f"variance must be positive, got {self.variance}")
        if not 0 < self.p < 1:
            raise ValueError(f"skew weight p must lie in (0, 1), got {self.p}")

    @classmethod
    def symmetric(cls, variance=1.0):
        return cls(variance, 0.5)

    @classmethod
    def from_third_moment(cls, variance, mu3):
        """The member with the given variance and third moment."""
        s = math.sqrt(variance)
        g = mu3 / s**3
        return cls(variance, 0.5 * (1.0 - g / math.sqrt(4.0 + g * g)))

    @property
    def sigma(self):
        return math.sqrt(self.variance)

    @property
    def values(self):
        s, p = self.sigma, self.p
        return (s * math.sqrt((1 - p) / p), -s * math.sqrt(p / (1 - p)))

    @property
    def probs(self):
        return (self.p, 1.0 - self.p)

    @property
    def third_moment(self):
        p = self.p
        return self.sigma**3 * (1 - 2 * p) / math.sqrt(p * (1 - p))

    @property
    def fourth_moment(self):
        p = self.p
        return self.variance**2 * ((1 - p) ** 3 + p**3) / (p * (1 - p))

    def marginal(self):
        return Marginal(self.values, self.probs)


class FiniteSupportDistribution:
    """The measure ``sum_i alpha_i delta_{v_i}`` on R^n.

    Parameters
    ----------
    support : array, shape (n, m)
        Support points as columns.
    weights : array, shape (m,)
        Strictly positive, summing to one.
    marginals : sequence of Marginal, optional
        Set when the distribution is a declared product of independent
        coordinates; the support must then be their Cartesian product.
    """

    def __init__(self, support, weights, marginals: Sequence[Marginal] | None = None):
        V = np.array(support, dtype=float)
        if V.ndim == 1:
            V = V[None, :]
        a = np.array(weights, dtype=float).ravel()
        if V.ndim != 2 or V.shape[1] != a.shape[0]:
            raise DimensionMismatch(
                f"support has shape {V.shape}, weights has length {a.shape[0]}"
            )
        if a.size == 0 or np.any(a <= 0) or abs(math.fsum(a) - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError("weights must be strictly positive and sum to 1")
        if not np.all(np.isfinite(V)):
            raise ValueError("support contains non-finite values")
        V.setflags(write=False)
        a.setflags(write=False)
        self.support = V
        self.weights = a
        self.marginals = tuple(marginals) if marginals is not None else None

    @property
    def n(self):
        return self.support.shape[0]

    @property
    def m(self):
        return self.support.shape[1]

    @property
    def independent(self):
        return self.marginals is not None

    def mean(self):
        return self.support @ self.weights

    def second_moment(self):
        """Raw ``E vv' = V diag(alpha) V'``."""
        V = self.support
        return (V * self.weights) @ V.T

    def covariance(self):
        mu = self.mean()
        C = self.second_moment() - np.outer(mu, mu)
        return 0.5 * (C + C.T)

    def shift(self, offset):
        """The law of ``v + offset``."""
        offset = np.asarray(offset, dtype=float)
        marg = None
        if self.marginals is not None:
            marg = [
                Marginal(tuple(x + o for x in mg.values), mg.probs)
                for mg, o in zip(self.marginals, offset)
            ]
        return FiniteSupportDistribution(self.support + offset[:, None], self.weights, marg)

    def scaled(self, factor):
        return FiniteSupportDistribution(self.support * factor, self.weights)

    def linear_image(self, T):
        """The law of ``T v`` (product structure is dropped)."""
        return FiniteSupportDistribution(np.asarray(T, dtype=float) @ self.support, self.weights)

    def expect(self, f):
        return exact_expectation(self, f)

    def sample(self, rng, size):
        """Draw ``size`` points as rows of a ``(size, n)`` array by inverse CDF."""
        u = rng.random(size)
        cdf = np.cumsum(self.weights)
        idx = np.minimum(np.searchsorted(cdf, u, side="right"), self.m - 1)
        return self.support[:, idx].T

    def to_dict(self):
        out = {"support": self.support.tolist(), "weights": self.weights.tolist()}
        if self.marginals is not None:
            out["marginals"] = [
                {"values": list(mg.values), "probs": list(mg.probs)} for mg in self.marginals
            ]
        return out

    @classmethod
    def from_dict(cls, data):
        marg = None
        if data.get("marginals") is not None:
            marg = [Marginal(tuple(mg["values"]), tuple(mg["probs"])) for mg in data["marginals"]]
        support = np.array(data["support"], dtype=float)
        if support.ndim == 1:
            support = support[None, :]
        return cls(support, data["weights"], marg)

    def __repr__(self):
        tag = ", independent" if self.independent else ""
        return f"FiniteSupportDistribution(n={self.n}, m={self.m}{tag})"


def exact_expectation(dist: FiniteSupportDistribution, f: Callable) -> np.ndarray:
    """``sum_i alpha_i f(v_i)`` summed in support order."""
    vals = [np.atleast_1d(np.asarray(f(dist.support[:, i]), dtype=float)) for i in range(dist.m)]
    acc = np.zeros_like(vals[0])
    for w, v in zip(dist.weights, vals):
        acc = acc + w * v
    return acc


def product(marginals: Sequence, cap=ENUMERATION_CAP):
    """Product measure of independent one-dimensional marginals.

    Support points are ordered lexicographically with the first coordinate
    varying slowest.
    """
    margs = [m.marginal() if isinstance(m, SkewedTwoPoint) else m for m in marginals]
    size = math.prod(len(m.values) for m in margs)
    if size > cap:
        raise SupportTooLarge(f"product support has {size} points, cap is {cap}")
    cols, ws = [], []
    for combo in itertools.product(*(range(len(m.values)) for m in margs)):
        cols.append([m.values[c] for m, c in zip(margs, combo)])
        ws.append(math.prod(m.probs[c] for m, c in zip(margs, combo)))
    return FiniteSupportDistribution(np.array(cols).T, ws, margs)


def product_iid(base, n, cap=ENUMERATION_CAP):
    """``n`` i.i.d. copies of ``base`` (a SkewedTwoPoint or Marginal)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return product([base] * n, cap=cap)


@dataclass(frozen=True, eq=False)
class MomentModel:
    """Moments of a mean-zero error vector.

    ``third`` is either the full symmetric tensor ``E e_j e_l e_m`` (shape
    ``(n, n, n)``) or, for independent coordinates, the vector of ``E e_j^3``.
    ``source`` keeps the finite-support law the moments came from, if any,
    so variances of quadratic forms can be enumerated exactly.
    """

    second: np.ndarray
    third: np.ndarray
    fourth_diag: np.ndarray | None = None
    independent: bool = False
    source: FiniteSupportDistribution | None = None

    def __post_init__(self):
        S = symmetrize(self.second, name="second")
        n = S.shape[0]
        if np.linalg.eigvalsh(S)[0] < -1e-12 * max(1.0, float(np.max(np.abs(S)))):
            raise NotPositiveDefinite("second-moment matrix is not positive semidefinite")
        T = np.asarray(self.third, dtype=float)
        if self.independent:
            if T.shape != (n,):
                raise DimensionMismatch("independent models store third moments as a vector")
            if np.max(np.abs(S - np.diag(np.diag(S)))) > 1e-12 * max(1.0, np.max(np.abs(S))):
                raise ValueError("independent model must have a diagonal second-moment matrix")
        else:
            if T.shape != (n, n, n):
                raise DimensionMismatch(f"third-moment tensor must have shape {(n, n, n)}")
            scale = max(1.0, float(np.max(np.abs(T)))) if T.size else 1.0
            for perm in [(1, 0, 2), (0, 2, 1), (2, 1, 0)]:
                if np.max(np.abs(T - T.transpose(perm))) > 1e-12 * scale:
                    raise ValueError("third-moment tensor is not symmetric")
        F = None
        if self.fourth_diag is not None:
            F = np.asarray(self.fourth_diag, dtype=float)
            if F.shape != (n,):
                raise DimensionMismatch("fourth_diag must have length n")
            d2 = np.diag(S) ** 2
            if np.any(F < d2 - 1e-12 * np.maximum(1.0, d2)):
                raise ValueError("fourth moments violate E e^4 >= (E e^2)^2")
        object.__setattr__(self, "second", S)
        object.__setattr__(self, "third", T)
        object.__setattr__(self, "fourth_diag", F)

    @property
    def n(self):
        return self.second.shape[0]

    def require_error_model(self):
        """Raise NotPositiveDefinite unless the covariance is positive definite."""
        if np.linalg.eigvalsh(self.second)[0] <= 1e-12 * max(1.0, np.max(np.abs(self.second))):
            raise NotPositiveDefinite("error covariance is singular")
        return self

    def third_tensor(self):
        if not self.independent:
            return self.third
        if self.n > TENSOR_MAX_N:
            raise SupportTooLarge(f"full third-moment tensor not materialized for n > {TENSOR_MAX_N}")
        T = np.zeros((self.n,) * 3)
        idx = np.arange(self.n)
        T[idx, idx, idx] = self.third
        return T

    def to_dict(self):
        kind = "vector" if self.independent else "tensor"
        return {
            "n": self.n,
            "independent": self.independent,
            "second": {"shape": [self.n, self.n], "data": self.second.tolist()},
            "third": {"kind": kind, "shape": list(self.third.shape), "data": self.third.tolist()},
            "fourth_diag": None
            if self.fourth_diag is None
            else {"shape": [self.n], "data": self.fourth_diag.tolist()},
        }

    @classmethod
    def from_dict(cls, data):
        third = data["third"]
        indep = third["kind"] == "vector"
        fd = data.get("fourth_diag")
        return cls(
            np.array(data["second"]["data"], dtype=float).reshape(data["second"]["shape"]),
            np.array(third["data"], dtype=float).reshape(third["shape"]),
            None if fd is None else np.array(fd["data"], dtype=float),
            indep,
        )


def independent_model(marginals: Sequence) -> MomentModel:
    """Analytic moments of independent coordinates, without enumerating the product."""
    margs = [m.marginal() if isinstance(m, SkewedTwoPoint) else m for m in marginals]
    m2 = np.array([m.central_moment(2) for m in margs])
    m3 = np.array([m.central_moment(3) for m in margs])
    m4 = np.array([m.central_moment(4) for m in margs])
    return MomentModel(np.diag(m2), m3, m4, independent=True)


def moments_of(dist: FiniteSupportDistribution) -> MomentModel:
    """Central moments of ``dist`` by exact enumeration."""
    E = dist.support - dist.mean()[:, None]
    w = dist.weights
    second = (E * w) @ E.T
    fourth = (E**4) @ w
    if dist.independent:
        third = (E**3) @ w
        second = np.diag(np.diag(second))
        return MomentModel(second, third, fourth, independent=True, source=dist)
    if dist.n > TENSOR_MAX_N:
        raise SupportTooLarge(f"full third-moment tensor not materialized for n > {TENSOR_MAX_N}")
    third = np.einsum("i,ji,li,mi->jlm", w, E, E, E)
    return MomentModel(second, third, fourth, independent=False, source=dist)


class QuadraticFormMoments(NamedTuple):
    mean: float
    variance: float | None  # None when fourth moments are unavailable


def quadratic_form_variance_independent(H, second_diag, fourth_diag):
    """``Var(e'He)`` for independent mean-zero coordinates.

    ``sum_j h_jj^2 (mu4_j - mu2_j^2) + 2 sum_{j != l} h_jl^2 mu2_j mu2_l``.
    """
    H = np.asarray(H, dtype=float)
    mu2 = np.asarray(second_diag, dtype=float)
    mu4 = np.asarray(fourth_diag, dtype=float)
    h = np.diag(H)
    off = H * H * np.outer(mu2, mu2)
    np.fill_diagonal(off, 0.0)
    return float(np.sum(h * h * (mu4 - mu2 * mu2)) + 2.0 * np.sum(off))


def quadratic_form_moments(H, model: MomentModel) -> QuadraticFormMoments:
    """Mean and variance of ``e'He`` under a mean-zero error model."""
    H = symmetrize(H, name="H")
    if H.shape != (model.n, model.n):
        raise DimensionMismatch(f"H is {H.shape}, model has n={model.n}")
    mean = float(np.sum(H * model.second))
    if model.source is not None:
        E = model.source.support - model.source.mean()[:, None]
        q = np.einsum("ji,jl,li->i", E, H, E)
        w = model.source.weights
        var = float(w @ (q - w @ q) ** 2)
        return QuadraticFormMoments(mean, var)
    if model.independent and model.fourth_diag is not None:
        var = quadratic_form_variance_independent(H, np.diag(model.second), model.fourth_diag)
        return QuadraticFormMoments(mean, var)
    return QuadraticFormMoments(mean, None)
