"""Dense kernels: Gram factorizations, leverage scores, the mixed norm.

Everything here is the exact reference path; the randomized structures in the
rest of the package are tested against these functions.  Matrices are dense
row-major float64 throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when a Gram matrix has no usable factorization."""


PIVOT_TOL = 1e-12


class FlopCounter:
    """Rough dense-work telemetry; counts the O(nd^2) and O(d^3) kernels."""

    def __init__(self):
        self.reset()

    def reset(self):
        self.gram = 0
        self.factor = 0
        self.solve = 0

    def total(self) -> int:
        return self.gram + self.factor + self.solve


COUNTER = FlopCounter()


def _check_matrix(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


class GramFactorization:
    """Cholesky of a symmetric PD matrix, with a pivoted-LDL fallback.

    Pivots below PIVOT_TOL (relative to the largest diagonal entry) raise
    SingularMatrixError.
    """

    def __init__(self, M: np.ndarray):
        M = np.asarray(M, dtype=float)
        d = M.shape[0]
        COUNTER.factor += d**3 // 3
        scale = max(np.max(np.abs(np.diag(M))), 1e-300)
        try:
            c, low = scipy.linalg.cho_factor(M, lower=True, check_finite=False)
            if np.min(np.diag(c)) ** 2 < PIVOT_TOL * scale:
                raise np.linalg.LinAlgError("tiny pivot")
            self._chol = (c, low)
            self._ldl = None
        except np.linalg.LinAlgError:
            lu, dd, perm = scipy.linalg.ldl(M, lower=True)
            piv = np.abs(np.diag(dd))
            if np.min(piv) < PIVOT_TOL * scale:
                raise SingularMatrixError(
                    "Gram matrix is singular to working precision") from None
            self._chol = None
            self._ldl = (lu, dd, perm)
        self.shape = M.shape

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        COUNTER.solve += self.shape[0] ** 2 * (1 if rhs.ndim == 1 else rhs.shape[1])
        if self._chol is not None:
            return scipy.linalg.cho_solve(self._chol, rhs, check_finite=False)
        lu, dd, perm = self._ldl
        # M = L D L^T with L[perm] lower-triangular
        l_p = lu[perm]
        rhs_p = rhs[perm] if rhs.ndim == 1 else rhs[perm, :]
        z = scipy.linalg.solve_triangular(l_p, rhs_p, lower=True, unit_diagonal=True)
        z = np.linalg.solve(dd, z)
        z = scipy.linalg.solve_triangular(l_p.T, z, lower=False, unit_diagonal=True)
        out = np.empty_like(z)
        out[perm] = z
        return out


def gram(A: np.ndarray, w: np.ndarray | None = None) -> np.ndarray:
    """A^T W A for a positive diagonal weight w (w=None means identity)."""
    A = _check_matrix(A)
    n, d = A.shape
    COUNTER.gram += n * d * d
    if w is None:
        return A.T @ A
    w = np.asarray(w, dtype=float)
    return A.T @ (w[:, None] * A)


def solve_normal(A: np.ndarray, w: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Exact solve of (A^T W A) y = rhs; the oracle for every inverse handle."""
    w = np.asarray(w, dtype=float)
    if np.any(w <= 0):
        raise ValueError("weights must be strictly positive")
    return GramFactorization(gram(A, w)).solve(np.asarray(rhs, dtype=float))


def leverage_scores(A: np.ndarray) -> np.ndarray:
    """Diagonal of the orthogonal projection onto the column space of A."""
    A = _check_matrix(A)
    fact = GramFactorization(gram(A))
    B = fact.solve(A.T)           # (A^T A)^{-1} A^T
    return np.einsum("ij,ji->i", A, B)


def regularized_tau(A: np.ndarray) -> np.ndarray:
    """Leverage scores shifted by d/n; entries in (d/n, 1 + d/n], sum 2d."""
    n, d = A.shape
    return leverage_scores(A) + d / n


def weighted_tau(A: np.ndarray, x: np.ndarray, s: np.ndarray, alpha: float) -> np.ndarray:
    """Regularized scores of the reweighted matrix S^(-1/2-a) X^(1/2-a) A."""
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(x <= 0) or np.any(s <= 0):
        raise ValueError("x and s must be strictly positive")
    scale = s ** (-0.5 - alpha) * x ** (0.5 - alpha)
    return regularized_tau(scale[:, None] * A)


def mixed_norm(z: np.ndarray, tau: np.ndarray, c_norm: float) -> float:
    """||z||_inf + c_norm * sqrt(sum_i tau_i z_i^2)."""
    z = np.asarray(z, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if z.shape != tau.shape:
        raise ValueError("length mismatch between vector and tau")
    if c_norm <= 0:
        raise ValueError("c_norm must be positive")
    if z.size == 0:
        return 0.0
    return float(np.max(np.abs(z)) + c_norm * math.sqrt(float(np.sum(tau * z * z))))


@dataclass(frozen=True)
class MixedNormParams:
    tau: np.ndarray
    c_norm: float

    def __call__(self, z: np.ndarray) -> float:
        return mixed_norm(z, self.tau, self.c_norm)


def tau_norm(z: np.ndarray, tau: np.ndarray) -> float:
    return float(math.sqrt(float(np.sum(tau * np.asarray(z, float) ** 2))))


def spectral_approx_check(M1: np.ndarray, M2: np.ndarray, eps: float,
                          slack: float = 1e-9) -> bool:
    """True iff exp(-eps) M2 <= M1 <= exp(eps) M2 in the PSD order.

    Checked through the generalized eigenvalues of (M1, M2); `slack` absorbs
    floating-point noise in the exactly-critical cases.
    """
    M1 = np.asarray(M1, dtype=float)
    M2 = np.asarray(M2, dtype=float)
    if M1.shape != M2.shape or M1.shape[0] != M1.shape[1]:
        raise ValueError("need square matrices of equal shape")
    try:
        c = np.linalg.cholesky(M2)
    except np.linalg.LinAlgError:
        raise SingularMatrixError("reference matrix is not positive definite") from None
    W = scipy.linalg.solve_triangular(c, M1, lower=True, check_finite=False)
    W = scipy.linalg.solve_triangular(c, W.T, lower=True, check_finite=False)
    evals = np.linalg.eigvalsh(0.5 * (W + W.T))
    lo = math.exp(-eps) * (1 - slack) - slack
    hi = math.exp(eps) * (1 + slack) + slack
    return bool(np.all(evals >= lo) and np.all(evals <= hi))


def projection_matrix(A: np.ndarray) -> np.ndarray:
    """A (A^T A)^{-1} A^T; test oracle, O(n^2 d) so keep n moderate."""
    A = _check_matrix(A)
    fact = GramFactorization(gram(A))
    return A @ fact.solve(A.T)


def lambda_matrix(A: np.ndarray) -> np.ndarray:
    """Sigma - P o P; the PSD Jacobian of the leverage-score map."""
    P = projection_matrix(A)
    return np.diag(np.diag(P)) - P * P
