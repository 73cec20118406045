"""Fixed-design linear model: OLS, GLS, linear estimators and Loewner order."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from gmlab.errors import DimensionMismatch, NotPositiveDefinite, NotSymmetric, RankDeficient

RANK_TOL = 1e-10
LOEWNER_TOL = 1e-9
SYM_TOL = 1e-9
UNBIASED_TOL = 1e-10

__all__ = [
    "CovarianceSpec",
    "DesignMatrix",
    "LinearEstimator",
    "LoewnerVerdict",
    "gls",
    "gls_map",
    "linear_estimator_variance",
    "loewner_compare",
    "ols",
    "ols_map",
    "symmetrize",
]


def symmetrize(M, tol=SYM_TOL, name="matrix"):
    """Return ``(M + M')/2`` after checking ``M`` is symmetric within ``tol``.

    The tolerance is relative to ``max(1, max|M|)``.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {M.shape}")
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    asym = float(np.max(np.abs(M - M.T))) if M.size else 0.0
    if asym > tol * scale:
        raise NotSymmetric(f"{name} is not symmetric (max |M - M'| = {asym:.3e})")
    return 0.5 * (M + M.T)


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Non-random ``n x k`` regressor matrix with full column rank and ``k < n``."""

    entries: np.ndarray

    def __post_init__(self):
        X = np.array(self.entries, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise DimensionMismatch(f"design must be 2-D, got {X.ndim}-D")
        n, k = X.shape
        if not 1 <= k < n:
            raise RankDeficient(f"design needs 1 <= k < n, got n={n}, k={k}")
        if not np.all(np.isfinite(X)):
            raise RankDeficient("design contains non-finite entries")
        s = np.linalg.svd(X, compute_uv=False)
        if s[-1] <= RANK_TOL * s[0]:
            raise RankDeficient(
                f"design has column rank < {k} (singular values {s[0]:.3e} .. {s[-1]:.3e})"
            )
        X.setflags(write=False)
        object.__setattr__(self, "entries", X)

    @property
    def X(self):
        return self.entries

    @property
    def n(self):
        return self.entries.shape[0]

    @property
    def k(self):
        return self.entries.shape[1]

    @classmethod
    def location(cls, n):
        return cls(np.ones((n, 1)))

    def is_location(self):
        """True when ``k = 1`` and the single column is a nonzero constant."""
        if self.k != 1:
            return False
        col = self.entries[:, 0]
        return bool(np.allclose(col, col[0], rtol=0, atol=1e-12 * abs(col[0])))

    def delete_row(self, i):
        """Design with observation ``i`` removed (may raise RankDeficient)."""
        return DesignMatrix(np.delete(self.entries, i, axis=0))

    def __repr__(self):
        return f"DesignMatrix(n={self.n}, k={self.k})"


@dataclass(frozen=True, eq=False)
class CovarianceSpec:
    """Error covariance ``sigma2 * Sigma`` with ``Sigma`` symmetric positive definite."""

    sigma2: float
    Sigma: np.ndarray

    def __post_init__(self):
        if not (np.isfinite(self.sigma2) and self.sigma2 > 0):
            raise NotPositiveDefinite(f"sigma2 must be positive, got {self.sigma2}")
        S = symmetrize(self.Sigma, name="Sigma")
        if np.linalg.eigvalsh(S)[0] <= 0:
            raise NotPositiveDefinite("Sigma is not positive definite")
        S.setflags(write=False)
        object.__setattr__(self, "Sigma", S)
        object.__setattr__(self, "sigma2", float(self.sigma2))

    @classmethod
    def identity(cls, n, sigma2=1.0):
        return cls(sigma2, np.eye(n))

    @property
    def n(self):
        return self.Sigma.shape[0]

    @property
    def second(self):
        """The second-moment matrix ``E ee' = sigma2 * Sigma``."""
        return self.sigma2 * self.Sigma


@dataclass(frozen=True, eq=False)
class LinearEstimator:
    """The estimator ``y -> A y`` for a ``k x n`` matrix ``A``."""

    A: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        if A.ndim == 1:
            A = A[None, :]
        A.setflags(write=False)
        object.__setattr__(self, "A", A)

    def __call__(self, y):
        return self.A @ np.asarray(y, dtype=float)

    def is_unbiased(self, design, tol=UNBIASED_TOL):
        """``A X = I_k`` entrywise within ``tol``."""
        if self.A.shape != (design.k, design.n):
            return False
        return bool(np.max(np.abs(self.A @ design.X - np.eye(design.k))) <= tol)


@dataclass(frozen=True)
class LoewnerVerdict:
    dominated: bool
    min_eigenvalue: float
    witness_direction: np.ndarray


def _check_y(design, y):
    y = np.asarray(y, dtype=float)
    if y.shape[0] != design.n:
        raise DimensionMismatch(f"y has length {y.shape[0]}, design has n={design.n}")
    return y


def ols_map(design):
    """The ``k x n`` matrix ``(X'X)^{-1} X'``, via a thin QR factorization."""
    q, r = np.linalg.qr(design.X)
    return sla.solve_triangular(r, q.T)


def ols(design, y):
    """Ordinary least squares ``(X'X)^{-1} X'y``.

    ``y`` may also be an ``n x m`` matrix of stacked observation vectors.
    """
    y = _check_y(design, y)
    q, r = np.linalg.qr(design.X)
    return sla.solve_triangular(r, q.T @ y)


def _whitener(cov, n):
    if cov.n != n:
        raise DimensionMismatch(f"Sigma is {cov.n}x{cov.n}, design has n={n}")
    try:
        return sla.cholesky(cov.Sigma, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("Sigma is not positive definite") from exc


def gls_map(design, cov):
    """The ``k x n`` matrix ``(X' S^{-1} X)^{-1} X' S^{-1}``."""
    L = _whitener(cov, design.n)
    Xw = sla.solve_triangular(L, design.X, lower=True)
    q, r = np.linalg.qr(Xw)
    # (R^{-1} Q') L^{-1}
    return sla.solve_triangular(L, sla.solve_triangular(r, q.T).T, lower=True, trans="T").T


def gls(design, cov, y):
    """Generalized least squares ``(X' S^{-1} X)^{-1} X' S^{-1} y`` by whitening."""
    y = _check_y(design, y)
    L = _whitener(cov, design.n)
    Xw = sla.solve_triangular(L, design.X, lower=True)
    yw = sla.solve_triangular(L, y, lower=True)
    q, r = np.linalg.qr(Xw)
    return sla.solve_triangular(r, q.T @ yw)


def linear_estimator_variance(A, cov):
    """``sigma2 * A Sigma A'`` for a linear estimator ``A``."""
    if isinstance(A, LinearEstimator):
        A = A.A
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[1] != cov.n:
        raise DimensionMismatch(f"A has {A.shape[1]} columns, Sigma is {cov.n}x{cov.n}")
    V = cov.sigma2 * (A @ cov.Sigma @ A.T)
    return 0.5 * (V + V.T)


def loewner_compare(M1, M2, tol=LOEWNER_TOL):
    """Decide whether ``M1 - M2`` is positive semidefinite.

    The smallest eigenvalue of the difference is compared against
    ``-tol * max(1, |trace(M1 - M2)|)``.  The witness is the unit eigenvector
    for that eigenvalue, signed so its largest-magnitude entry is positive.
    """
    A = symmetrize(M1, name="M1")
    B = symmetrize(M2, name="M2")
    if A.shape != B.shape:
        raise DimensionMismatch(f"cannot compare {A.shape} with {B.shape}")
    D = A - B
    w, v = np.linalg.eigh(D)
    lam = float(w[0])
    c = v[:, 0]
    if c[np.argmax(np.abs(c))] < 0:
        c = -c
    scale = max(1.0, abs(float(np.trace(D))))
    return LoewnerVerdict(lam >= -tol * scale, lam, c)
