"""Sampled inverse maintenance with score hints.

The maintained object is Psi = (A^T V A)^{-1} for a row-sampled weight vector
v; updates resample a sorted error-bucket prefix and patch Psi with a low-rank
identity.  Solves run a preconditioned refinement against a freshly sampled
system and add a calibrated Gaussian mask so their output distribution matches
the idealized solver and hides the maintained sample.
"""

from __future__ import annotations

import math

import numpy as np

from .linalg import COUNTER, GramFactorization, SingularMatrixError, gram
from .sketching import make_rng


class InverseMaintainer:
    def __init__(self, A: np.ndarray, w: np.ndarray, tau: np.ndarray, eps: float,
                 seed=0, gamma_const: float = 8.0, richardson_step: float = 0.1,
                 richardson_auto: bool = True, rounds_const: float = 30.0,
                 noise_const: float = 1.0, refresh_frac: float = 0.25,
                 solve_check: bool = False):
        if not (0 < eps < 1):
            raise ValueError("eps must lie in (0, 1)")
        self.A = np.asarray(A, dtype=float)
        self.n, self.d = self.A.shape
        self.eps = float(eps)
        self.gamma = gamma_const * math.log(max(self.n, 3))
        self.step = richardson_step
        self.auto_step = richardson_auto
        self.rounds_const = rounds_const
        self.noise_const = noise_const
        self.refresh_frac = refresh_frac
        self.solve_check = solve_check
        self.rng = make_rng(seed)
        self.w_alg = np.asarray(w, dtype=float).copy()
        self.tau_alg = np.asarray(tau, dtype=float).copy()
        self._log_d = max(1, math.ceil(math.log2(max(self.d, 2))))
        self.v = self._sample_all()
        self._refactor()
        self.update_ranks: list[int] = []
        self.solve_retries = 0

    # -- sampling --------------------------------------------------------------

    def _probs(self, tau: np.ndarray, acc: float) -> np.ndarray:
        return np.minimum(1.0, self.gamma * acc**-2 * tau)

    def _sample_all(self) -> np.ndarray:
        p = self._probs(self.tau_alg, self.eps)
        keep = self.rng.random(self.n) < p
        return np.where(keep, self.w_alg / p, 0.0)

    def _sample_rows(self, rows: np.ndarray) -> np.ndarray:
        p = self._probs(self.tau_alg[rows], self.eps)
        keep = self.rng.random(rows.size) < p
        return np.where(keep, self.w_alg[rows] / p, 0.0)

    def _refactor(self):
        nz = np.nonzero(self.v)[0]
        if nz.size < self.d:
            raise SingularMatrixError("sampled Gram matrix is rank deficient")
        M = gram(self.A[nz], self.v[nz])
        for attempt in range(2):
            try:
                fact = GramFactorization(M)
                break
            except SingularMatrixError:
                if attempt == 1:
                    raise
                self.v = self._sample_all()
                nz = np.nonzero(self.v)[0]
                M = gram(self.A[nz], self.v[nz])
        self.psi = fact.solve(np.eye(self.d))
        self._rank_since_refresh = 0

    # -- update ------------------------------------------------------------------

    def update(self, w: np.ndarray, tau: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Resample the rows whose relative error crossed its bucket threshold.

        Returns (Psi, w_alg); Psi is the dense inverse of the sampled Gram.
        """
        w = np.asarray(w, dtype=float)
        tau = np.asarray(tau, dtype=float)
        y = np.concatenate([(8.0 / self.eps) * (w / self.w_alg - 1.0),
                            2.0 * (tau / self.tau_alg - 1.0)])
        order = np.argsort(-np.abs(y), kind="stable")
        rows_of = np.where(order < self.n, order, order - self.n)
        cum = np.cumsum(tau[rows_of])
        y_sorted = np.abs(y[order])
        chosen = None
        k = 0
        while True:
            thresh = 1.0 - k / (2.0 * self._log_d)
            pos = int(np.searchsorted(cum, float(2.0**k)))
            if pos >= 2 * self.n:
                pos = 2 * self.n - 1
            if y_sorted[pos] <= thresh:
                chosen = pos
                break
            if thresh <= 0.0:
                chosen = 2 * self.n - 1     # degenerate stream: refresh everything
                break
            k += 1
        prefix = order[: chosen + 1]
        prefix = prefix[np.abs(y[prefix]) > 0.0]
        rows = np.unique(np.where(prefix < self.n, prefix, prefix - self.n))
        if rows.size:
            self.w_alg[rows] = w[rows]
            self.tau_alg[rows] = tau[rows]
            v_new = self._sample_rows(rows)
            self._apply_low_rank(rows, v_new)
        self.update_ranks.append(int(rows.size))
        return self.psi, self.w_alg.copy()

    def _apply_low_rank(self, rows: np.ndarray, v_new: np.ndarray):
        dv = v_new - self.v[rows]
        live = np.abs(dv) > 0.0
        rows, dv = rows[live], dv[live]
        self.v[rows] += dv
        if rows.size == 0:
            return
        self._rank_since_refresh += rows.size
        if self._rank_since_refresh > self.refresh_frac * self.d:
            self._refactor()
            return
        U = self.A[rows]                      # (r, d)
        PU = self.psi @ U.T                   # (d, r)
        K = np.diag(1.0 / dv) + U @ PU
        COUNTER.factor += rows.size**3 // 3
        try:
            self.psi -= PU @ np.linalg.solve(K, PU.T)
        except np.linalg.LinAlgError:
            self._refactor()

    # -- solves ---------------------------------------------------------------------

    def _sampled_system(self, w_bar: np.ndarray, acc: float):
        p = self._probs(self.tau_alg, acc)
        keep = self.rng.random(self.n) < p
        u = np.where(keep, w_bar / p, 0.0)
        nz = np.nonzero(u)[0]
        B = self.A[nz] * np.sqrt(u[nz])[:, None]
        return u, nz, B

    def _apply(self, B: np.ndarray, Y: np.ndarray) -> np.ndarray:
        COUNTER.gram += 2 * B.shape[0] * B.shape[1] * (Y.shape[1] if Y.ndim > 1 else 1)
        return B.T @ (B @ Y)

    def secure_solve(self, b: np.ndarray, w_bar: np.ndarray, delta: float,
                     noise: bool = True) -> np.ndarray:
        """High-accuracy solve of a freshly sampled system plus Gaussian mask."""
        b = np.asarray(b, dtype=float)
        single = b.ndim == 1
        B_rhs = b[:, None] if single else b
        u, nz, Bs = self._sampled_system(np.asarray(w_bar, dtype=float), delta)
        eta = self.rng.standard_normal(nz.size)
        c2 = Bs.T @ eta
        rhs = np.concatenate([B_rhs, c2[:, None]], axis=1)
        Y = np.zeros_like(rhs)
        rounds = max(4, math.ceil(self.rounds_const
                                  * math.log(max(self.n / delta, 2.0))))
        # The refinement only touches the sampled Gram; materializing it is
        # cheaper than repeated tall matvecs unless d is comparable to rounds.
        M_s = None
        if self.d <= 4 * rounds:
            COUNTER.gram += Bs.shape[0] * self.d * self.d
            M_s = Bs.T @ Bs
        apply_m = (lambda Y: M_s @ Y) if M_s is not None \
            else (lambda Y: self._apply(Bs, Y))
        norm0 = np.linalg.norm(rhs, axis=0)
        rel_tol = max(1e-13, 1e-2 * delta)
        for _ in range(rounds):
            R = rhs - apply_m(Y)
            if np.all(np.linalg.norm(R, axis=0) <= rel_tol * norm0):
                break
            Z = self.psi @ R
            if self.auto_step:
                MZ = apply_m(Z)
                num = np.einsum("ij,ij->j", Z, R)
                den = np.einsum("ij,ij->j", Z, MZ)
                steps = np.where(den > 0, num / np.maximum(den, 1e-300), self.step)
                Y += Z * steps
            else:
                Y += self.step * Z
        y1 = Y[:, :-1]
        y2 = Y[:, -1:]
        if noise and self.noise_const > 0.0:
            energy = np.sqrt(np.abs(np.einsum("ij,ij->j", y1, apply_m(y1))))
            alpha = self.noise_const * math.sqrt(delta / self.d) * energy
            out = y1 + y2 * alpha[None, :]
        else:
            out = y1
        return out[:, 0] if single else out

    def solve(self, b: np.ndarray, w_bar: np.ndarray, delta: float) -> np.ndarray:
        """Unbiased solve: E[return] = (A^T Wbar A)^{-1} b, spectral error delta."""
        b = np.asarray(b, dtype=float)
        w_bar = np.asarray(w_bar, dtype=float)
        for attempt in range(4):
            y0 = self.secure_solve(b, w_bar, delta / 2.0**20)
            y = y0.copy()
            X = int(self.rng.geometric(0.5)) - 1
            for _ in range(X):
                u, nz, Bs = self._sampled_system(w_bar, delta)
                resid = b - self._apply(Bs, y)
                y = 2.0 * (y - 0.5 * y0 + self.secure_solve(resid, w_bar, 0.125))
            if not self.solve_check or self._solve_ok(b, w_bar, y, y0, delta):
                return y
            self.solve_retries += 1
        return y

    def _solve_ok(self, b, w_bar, y, y0, delta) -> bool:
        """Drift bound of the preconditioned rollout; exact-reference check."""
        M = gram(self.A, w_bar)
        fact = GramFactorization(M)
        diff = np.atleast_2d((y - y0).T).T
        bb = np.atleast_2d(b.T).T
        lhs = np.sqrt(np.einsum("ij,ij->j", diff, M @ diff))
        r0 = bb - M @ np.atleast_2d(y0.T).T
        rnorm = np.sqrt(np.einsum("ij,ij->j", r0, fact.solve(r0)))
        bnorm = np.sqrt(np.einsum("ij,ij->j", bb, fact.solve(bb)))
        return bool(np.all(lhs <= 30.0 * rnorm + 30.0 * delta * bnorm + 1e-12))

    def ideal_solve(self, b: np.ndarray, w_bar: np.ndarray, delta: float,
                    noise: bool = True) -> np.ndarray:
        """Exact factorization twin of secure_solve; test oracle."""
        b = np.asarray(b, dtype=float)
        u, nz, Bs = self._sampled_system(np.asarray(w_bar, dtype=float), delta)
        fact = GramFactorization(Bs.T @ Bs)
        eta = self.rng.standard_normal(nz.size)
        c2 = Bs.T @ eta
        y1 = fact.solve(b)
        if not noise or self.noise_const == 0.0:
            return y1
        energy = math.sqrt(float(y1 @ self._apply(Bs, y1)))
        alpha = self.noise_const * math.sqrt(delta / self.d) * energy
        return y1 + alpha * fact.solve(c2)

    # -- verification helpers ------------------------------------------------------

    def direct_inverse(self) -> np.ndarray:
        nz = np.nonzero(self.v)[0]
        return GramFactorization(gram(self.A[nz], self.v[nz])).solve(np.eye(self.d))

    def woodbury_error(self) -> float:
        return float(np.max(np.abs(self.psi - self.direct_inverse())))
