"""Correction machinery that keeps the primal iterate nearly feasible.

The IPM's Newton steps only annihilate A^T delta_x in expectation, so the
residual A^T x - b random-walks.  Every iteration an unbiased estimator nudges
the walk back; on a fixed schedule an explicit projection shrinks it
geometrically.  The infeasibility is measured by
phi_b = ||A^T x - b||^2_{(A^T X' S'^-1 A)^-1} / mu.
"""

from __future__ import annotations

import math

import numpy as np

from .linalg import GramFactorization, gram


def phi_b(A: np.ndarray, b: np.ndarray, x: np.ndarray, x_ref: np.ndarray,
          s_ref: np.ndarray, mu: float) -> float:
    x_ref = np.asarray(x_ref, dtype=float)
    s_ref = np.asarray(s_ref, dtype=float)
    if np.any(x_ref <= 0) or np.any(s_ref <= 0):
        raise ValueError("reference point must be strictly positive")
    r = A.T @ x - b
    z = GramFactorization(gram(A, x_ref / s_ref)).solve(r)
    return float(r @ z) / mu


def exact_correction(A: np.ndarray, b: np.ndarray, x: np.ndarray, s: np.ndarray,
                     solver=None) -> np.ndarray:
    """x + X S^-1 A H^-1 (b - A^T x); with exact H the result is feasible.

    `solver` approximates (A^T X S^-1 A)^{-1} as a callable; None = exact.
    """
    resid = b - A.T @ x
    if solver is None:
        z = GramFactorization(gram(A, x / s)).solve(resid)
    else:
        z = solver(resid)
    return x + (x / s) * (A @ z)


def sample_delta_b(A: np.ndarray, b: np.ndarray, x: np.ndarray,
                   tau_bar: np.ndarray, eps_b: float, rng) -> np.ndarray:
    """Unbiased estimate of b - A^T x from tau-proportional row sampling."""
    p = np.minimum(1.0, np.asarray(tau_bar, dtype=float) / eps_b)
    keep = rng.random(x.size) < p
    x_tilde = np.where(keep, x / p, 0.0)
    return b - A.T @ x_tilde


def draw_truncation_length(rng) -> int:
    """X >= 0 with P[X >= k] = 2^-k."""
    return int(rng.geometric(0.5)) - 1


def make_h2_h4(A: np.ndarray, x: np.ndarray, s: np.ndarray,
               x_prev: np.ndarray, s_prev: np.ndarray, tau_bar: np.ndarray,
               eps_h: float, rng, solver_prev=None, sample_const: float = 8.0):
    """Unbiased estimators of the two correction operators.

    H2 estimates A^T X^.5 S^-.5 (X^.5 S^-.5 - X'^.5 S'^-.5) A by sampling its
    diagonal once (both factors share the sample); H4 estimates
    Q^-1 - Q'^-1 by a geometrically truncated expansion whose factors are
    fresh samples of A^T (D - D') A around solves of Q'.

    Returns (h2_apply, h4_apply).  solver_prev(rhs) must be an unbiased
    approximation of Q'^{-1} rhs; None uses the exact factorization.
    """
    x, s = np.asarray(x, float), np.asarray(s, float)
    x_prev, s_prev = np.asarray(x_prev, float), np.asarray(s_prev, float)
    ratio = np.max(np.abs(np.log(x) - np.log(x_prev)))
    ratio = max(ratio, np.max(np.abs(np.log(s) - np.log(s_prev))))
    if ratio > 0.25:
        raise ValueError("points too far apart for the truncated expansion")
    n = x.size
    lnn = math.log(max(n, 3))
    p = np.minimum(1.0, sample_const * lnn * eps_h**-2 * np.asarray(tau_bar, float))

    droot = np.sqrt(x / s)
    droot_prev = np.sqrt(x_prev / s_prev)
    diag_h2 = droot * (droot - droot_prev)
    keep2 = rng.random(n) < p
    diag_h2_s = np.where(keep2, diag_h2 / p, 0.0)

    def h2_apply(v: np.ndarray) -> np.ndarray:
        return A.T @ (diag_h2_s * (A @ v))

    if solver_prev is None:
        fact = GramFactorization(gram(A, x_prev / s_prev))
        solver_prev = fact.solve

    diag_delta = x / s - x_prev / s_prev
    guard = np.max(np.abs(diag_delta) * s_prev / x_prev)
    if guard > 0.5:
        raise ValueError("per-factor spectral norm exceeds 1/2; series may diverge")

    def h4_apply(v: np.ndarray) -> np.ndarray:
        # Truncated expansion, factors applied innermost-first; the factor
        # order is reversed relative to the index order, which leaves the
        # distribution unchanged since the factors are i.i.d.
        X = draw_truncation_length(rng)
        if X == 0:
            return np.zeros_like(v)
        acc = np.zeros_like(v)
        u = v
        coeff = 1.0
        for _ in range(X):
            u = solver_prev(u)
            keep = rng.random(n) < p
            dd = np.where(keep, diag_delta / p, 0.0)
            u = A.T @ (dd * (A @ u))
            coeff *= -2.0
            acc = acc + coeff * u
        return solver_prev(acc)

    return h2_apply, h4_apply


def maintain_infeasibility(A: np.ndarray, b: np.ndarray, x: np.ndarray,
                           s: np.ndarray, x_prev: np.ndarray, s_prev: np.ndarray,
                           tau_bar: np.ndarray, eps_b: float, eps_h: float, rng,
                           solver_now=None, solver_prev=None,
                           x_for_delta_b: np.ndarray | None = None) -> np.ndarray:
    """One corrective multiplier step: H1^-1 H2 H3^-1 db1 + H4 db2."""
    if solver_now is None:
        fact_now = GramFactorization(gram(A, x / s))
        solver_now = fact_now.solve
    xs = x if x_for_delta_b is None else x_for_delta_b
    db1 = sample_delta_b(A, b, xs, tau_bar, eps_b, rng)
    db2 = sample_delta_b(A, b, xs, tau_bar, eps_b, rng)
    h2_apply, h4_apply = make_h2_h4(A, x, s, x_prev, s_prev, tau_bar, eps_h, rng,
                                    solver_prev=solver_prev)
    if solver_prev is None:
        fact_prev = GramFactorization(gram(A, x_prev / s_prev))
        solver_prev = fact_prev.solve
    return solver_now(h2_apply(solver_prev(db1))) + h4_apply(db2)


class FeasibilityManager:
    """Per-iteration corrective steps plus scheduled explicit projections."""

    def __init__(self, A: np.ndarray, b: np.ndarray, eps: float, d_eff: int,
                 zeta: float = 1.0, eps_b_const: float = 1.0,
                 eps_h_const: float = 1.0, window: int | None = None,
                 rng=None, exact: bool = True):
        self.A = A
        self.b = b
        n = A.shape[0]
        lnn = math.log(max(n, 3))
        self.eps_b = eps_b_const * zeta * eps**2 / (math.sqrt(d_eff) * lnn**2)
        self.eps_h = eps_h_const * zeta * eps / (d_eff**0.25 * lnn**3)
        self.window = window if window is not None else max(
            1, math.ceil(math.sqrt(d_eff) / lnn**6))
        self.rng = rng
        self.exact = exact
        self.counter = 0
        self.prev: tuple[np.ndarray, np.ndarray] | None = None

    def step(self, x: np.ndarray, s: np.ndarray, tau_bar: np.ndarray,
             solver_now=None, skip_tol: float = 0.0) -> np.ndarray:
        """Returns delta_lambda; the caller moves x by Xbar Sbar^-1 A delta.

        skip_tol: when the reference point moved less than this much in log
        scale the estimator terms are identically-zero noise and are skipped.
        """
        self.counter += 1
        d = self.A.shape[1]
        delta = np.zeros(d)
        if self.exact:
            # Exact reference path: the estimator terms vanish identically.
            pass
        elif self.prev is not None:
            x_prev, s_prev = self.prev
            moved = max(float(np.max(np.abs(np.log(x) - np.log(x_prev)))),
                        float(np.max(np.abs(np.log(s) - np.log(s_prev)))))
            if moved > skip_tol:
                delta = maintain_infeasibility(
                    self.A, self.b, x, s, x_prev, s_prev, tau_bar,
                    self.eps_b, self.eps_h, self.rng,
                    solver_now=solver_now)
        self.prev = (x.copy(), s.copy())
        if self.counter % self.window == 0:
            resid = self.b - self.A.T @ x
            if solver_now is None:
                z = GramFactorization(gram(self.A, x / s)).solve(resid)
            else:
                z = solver_now(resid)
            delta = delta + z
        return delta
