"""Quadratic perturbations of OLS that stay unbiased under homoskedastic errors.

A symmetric ``H`` with ``tr(H) = 0`` and ``X'HX = 0`` adds ``y'Hy`` to a
coordinate of OLS without introducing bias when ``E ee'`` is proportional to
the identity.  This module solves for that space, builds estimators from it
and diagnoses how such estimators fail once the covariance shape may vary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from gmlab.core import DesignMatrix, UNBIASED_TOL, ols_map
from gmlab.errors import ConstraintViolated, DimensionMismatch

CONSTRAINT_TOL = 1e-10
NULLSPACE_RTOL = 1e-10
SWEEP_EPS = 0.5
SWEEP_REPORT_TOL = 1e-8

__all__ = [
    "HBasis",
    "QuadraticEstimator",
    "SigmaProbe",
    "constraint_matrix",
    "constraint_residuals",
    "eigen_diagnostic",
    "make_perturbed_ols",
    "sigma_sweep_bias",
    "solve_h_space",
    "verify_unbiased_f2zero",
]


def _as_h_stack(H, n=None):
    H = np.asarray(H, dtype=float)
    if H.ndim == 2:
        H = H[None]
    if H.ndim != 3 or H.shape[1] != H.shape[2]:
        raise DimensionMismatch(f"H must be a stack of square matrices, got shape {H.shape}")
    if n is not None and H.shape[1] != n:
        raise DimensionMismatch(f"H matrices are {H.shape[1]}x{H.shape[1]}, expected n={n}")
    # WLOG symmetric: y'Hy only sees the symmetric part.
    return 0.5 * (H + H.transpose(0, 2, 1))


@dataclass(frozen=True, eq=False)
class QuadraticEstimator:
    """``y -> A y + alpha * (y'H_1 y, ..., y'H_k y)'``."""

    A: np.ndarray
    H: np.ndarray
    alpha: float = 1.0

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        H = _as_h_stack(self.H, A.shape[1])
        if H.shape[0] != A.shape[0]:
            raise DimensionMismatch(f"need k={A.shape[0]} H matrices, got {H.shape[0]}")
        A.setflags(write=False)
        H.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def k(self):
        return self.A.shape[0]

    @property
    def n(self):
        return self.A.shape[1]

    def quadratic_part(self, y):
        """``(y'H_i y)_i``; ``y`` may be ``(n,)`` or ``(n, m)``."""
        y = np.asarray(y, dtype=float)
        if y.ndim == 1:
            return np.einsum("j,ijl,l->i", y, self.H, y)
        return np.einsum("jm,ijl,lm->im", y, self.H, y)

    def estimate(self, y):
        y = np.asarray(y, dtype=float)
        return self.A @ y + self.alpha * self.quadratic_part(y)

    __call__ = estimate

    def to_dict(self):
        return {"A": self.A.tolist(), "H": self.H.tolist(), "alpha": self.alpha}

    @classmethod
    def from_dict(cls, data):
        return cls(np.array(data["A"], dtype=float), np.array(data["H"], dtype=float), data.get("alpha", 1.0))


def _pairs(n):
    return [(a, b) for a in range(n) for b in range(a, n)]


def constraint_matrix(design):
    """Linear constraints on ``H`` in trace-orthonormal half-vector coordinates.

    A symmetric ``H`` is encoded as ``u_aa = h_aa`` and ``u_ab = sqrt(2) h_ab``
    (``a < b``), so that ``<H, G> = tr(HG)`` becomes the dot product of the
    encodings.  Rows: the trace, then ``(X'HX)_pq`` for ``p <= q``.
    """
    X = design.X
    n, k = X.shape
    pairs = _pairs(n)
    rows = [[1.0 if a == b else 0.0 for a, b in pairs]]
    for p, q in _pairs(k):
        row = []
        for a, b in pairs:
            if a == b:
                row.append(X[a, p] * X[a, q])
            else:
                row.append((X[a, p] * X[b, q] + X[b, p] * X[a, q]) / np.sqrt(2.0))
        rows.append(row)
    return np.array(rows)


def _decode(u, n):
    H = np.zeros((n, n))
    for val, (a, b) in zip(u, _pairs(n)):
        if a == b:
            H[a, a] = val
        else:
            H[a, b] = H[b, a] = val / np.sqrt(2.0)
    return H


def _encode(H):
    n = H.shape[0]
    return np.array([H[a, b] if a == b else np.sqrt(2.0) * H[a, b] for a, b in _pairs(n)])


@dataclass(frozen=True, eq=False)
class HBasis:
    design: DesignMatrix
    basis: list
    constraint_rank: int
    singular_values: np.ndarray = field(repr=False, default=None)

    @property
    def dim(self):
        return len(self.basis)

    def as_array(self):
        n = self.design.n
        return np.array(self.basis).reshape(self.dim, n, n)

    def combine(self, coefs):
        """``sum_i coefs_i B_i``."""
        coefs = np.asarray(coefs, dtype=float)
        if coefs.shape != (self.dim,):
            raise DimensionMismatch(f"need {self.dim} coefficients, got {coefs.shape}")
        return np.tensordot(coefs, self.as_array(), axes=1)

    def project(self, H):
        """Orthogonal projection of ``H`` onto the span (trace inner product)."""
        H = 0.5 * (np.asarray(H, float) + np.asarray(H, float).T)
        if self.dim == 0:
            return np.zeros_like(H)
        B = self.as_array()
        return np.tensordot(np.einsum("ijl,jl->i", B, H), B, axes=1)

    def residual(self, H):
        """Frobenius norm of the component of ``H`` outside the span."""
        H = 0.5 * (np.asarray(H, float) + np.asarray(H, float).T)
        return float(np.linalg.norm(H - self.project(H)))

    def to_dict(self):
        return {
            "n": self.design.n,
            "k": self.design.k,
            "dim": self.dim,
            "constraint_rank": self.constraint_rank,
            "basis": [B.tolist() for B in self.basis],
        }


def solve_h_space(design: DesignMatrix, rtol=NULLSPACE_RTOL) -> HBasis:
    """Trace-orthonormal basis of ``{H symmetric : tr(H) = 0, X'HX = 0}``."""
    n = design.n
    C = constraint_matrix(design)
    _, s, vt = np.linalg.svd(C)
    rank = int(np.sum(s > rtol * s[0]))
    null = vt[rank:]
    basis = []
    for u in null:
        # deterministic sign: first entry of largest magnitude is positive
        lead = np.flatnonzero(np.abs(u) >= (1 - 1e-9) * np.max(np.abs(u)))[0]
        if u[lead] < 0:
            u = -u
        basis.append(_decode(u, n))
    return HBasis(design, basis, rank, s)


def constraint_residuals(design, H):
    """Per-matrix ``(|tr H_i|, max |X'H_i X|)``."""
    H = _as_h_stack(H, design.n)
    X = design.X
    tr = np.abs(np.trace(H, axis1=1, axis2=2))
    xhx = np.array([np.max(np.abs(X.T @ Hi @ X)) for Hi in H])
    return tr, xhx


def _check_constraints(design, H, tol):
    tr, xhx = constraint_residuals(design, H)
    xnorm2 = np.linalg.norm(design.X, 2) ** 2
    for i, Hi in enumerate(H):
        hn = max(1.0, float(np.linalg.norm(Hi)))
        if tr[i] > tol * hn:
            raise ConstraintViolated("trace", i, float(tr[i]))
        if xhx[i] > tol * hn * max(1.0, xnorm2):
            raise ConstraintViolated("X'HX", i, float(xhx[i]))


def make_perturbed_ols(design, H, alpha=1.0, tol=CONSTRAINT_TOL) -> QuadraticEstimator:
    """OLS plus ``alpha * (y'H_i y)_i``, after validating both constraints."""
    H = _as_h_stack(H, design.n)
    if H.shape[0] != design.k:
        raise DimensionMismatch(f"need k={design.k} H matrices, got {H.shape[0]}")
    _check_constraints(design, H, tol)
    return QuadraticEstimator(ols_map(design), H, alpha)


def _random_identity_cov_law(rng, n, m=None):
    """A finite-support mean-zero law on R^n with covariance exactly ``I`` (up to rounding)."""
    from gmlab.moments import FiniteSupportDistribution

    m = m or 2 * n + 1
    while True:
        V = rng.normal(size=(n, m)) + rng.standard_exponential(size=(n, m))
        w = rng.uniform(0.5, 1.5, size=m)
        w /= w.sum()
        V = V - (V @ w)[:, None]
        C = (V * w) @ V.T
        evals, evecs = np.linalg.eigh(C)
        if evals[0] > 1e-6 * evals[-1]:
            break
    W = evecs @ np.diag(evals**-0.5) @ evecs.T
    return FiniteSupportDistribution(W @ V, w)


def verify_unbiased_f2zero(est: QuadraticEstimator, design, tol=UNBIASED_TOL, checks=5, seed=0):
    """Unbiasedness for every law with ``E ee'`` proportional to the identity.

    Structural test (``AX = I``, ``tr H_i = 0``, ``X'H_i X = 0``) followed by
    exact enumeration of the bias under ``checks`` random finite-support laws
    with identity covariance and random ``beta``.
    """
    if est.A.shape != (design.k, design.n):
        return False
    if np.max(np.abs(est.A @ design.X - np.eye(design.k))) > tol:
        return False
    try:
        _check_constraints(design, est.H, CONSTRAINT_TOL)
    except ConstraintViolated:
        return est.alpha == 0.0
    rng = np.random.default_rng(seed)
    for _ in range(checks):
        beta = rng.integers(-3, 4, size=design.k).astype(float)
        sigma = rng.uniform(0.5, 2.0)
        law = _random_identity_cov_law(rng, design.n)
        Y = design.X @ beta[:, None] + sigma * law.support
        mean_est = est.estimate(Y) @ law.weights
        if np.max(np.abs(mean_est - beta)) > max(tol, 1e-10 * (1 + np.max(np.abs(beta)))):
            return False
    return True


@dataclass(frozen=True)
class SigmaProbe:
    j: int
    l: int
    Sigma: np.ndarray
    bias: np.ndarray


def sigma_sweep_bias(est: QuadraticEstimator, eps=SWEEP_EPS, report_tol=SWEEP_REPORT_TOL):
    """Bias ``alpha * tr(H_i Sigma)`` over the covariance shapes ``I + eps*E_jl``.

    ``E_jj = e_j e_j'`` and ``E_jl = e_j e_l' + e_l e_j'`` for ``j < l``; any
    ``eps`` in (0, 1) keeps the probes positive definite.  Returns the probes
    whose bias exceeds ``report_tol`` in some coordinate.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    n = est.n
    found = []
    for j in range(n):
        for l in range(j, n):
            S = np.eye(n)
            if j == l:
                S[j, j] += eps
            else:
                S[j, l] += eps
                S[l, j] += eps
            bias = est.alpha * np.einsum("ijl,jl->i", est.H, S)
            if np.max(np.abs(bias)) > report_tol:
                found.append(SigmaProbe(j, l, S, bias))
    return found


def eigen_diagnostic(est: QuadraticEstimator):
    """Ascending eigenvalues of each ``alpha * H_i``.

    All zero exactly when the estimator is linear.  Any nonzero eigenvalue
    means ``E ||beta_hat||^2`` depends on fourth moments of the rotated
    errors, so it is infinite for some identity-covariance law.
    """
    return [np.linalg.eigvalsh(est.alpha * Hi) for Hi in est.H]
