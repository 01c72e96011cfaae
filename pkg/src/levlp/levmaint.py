"""Maintain regularized leverage scores of G A under slow diagonal rescaling.

Changed scores are detected by sketching the change of the projection rows
across dyadic time windows; candidates are re-verified by two independent
score estimates before the stored value is refreshed, so the output does not
depend on the detection randomness on successful runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sketching import ApproxMatVec, as_seed_sequence, make_rng


@dataclass
class _Snapshot:
    g: np.ndarray
    tau: np.ndarray
    psi_safe: np.ndarray
    psi_b: np.ndarray       # Psi @ B at snapshot time


class LeverageMaintainer:
    def __init__(self, A: np.ndarray, g: np.ndarray, eps: float, seed=0,
                 reps: int = 3, sample_const: float = 16.0,
                 jl_cols_const: int = 8, candidates_full: bool = False):
        if not (0 < eps <= 0.25):
            raise ValueError("eps must lie in (0, 1/4]")
        self.A = np.asarray(A, dtype=float)
        self.n, self.d = self.A.shape
        self.eps = float(eps)
        self.lnn = math.log(max(self.n, 3))
        self.sample_const = sample_const
        self.candidates_full = candidates_full
        root = as_seed_sequence(seed)
        s_amv, s_jl, s_est = root.spawn(3)
        self.inner = ApproxMatVec(self.A, g, seed=s_amv, reps=reps)
        self.g = self.inner.g
        b = jl_cols_const * math.ceil(self.lnn)
        rng = make_rng(s_jl)
        self.R = rng.choice([-1.0, 1.0], size=(self.n, b)) / math.sqrt(b)
        self.b = b
        self.B = (self.A * self.g[:, None]).T @ self.R        # A^T G R, (d, b)
        self._est_rng = make_rng(s_est)
        self.t = 0
        self.tau = None
        self.levels = max(1, int(math.floor(math.log2(max(self.n, 2)))))
        self._snap: list[_Snapshot | None] = [None] * (self.levels + 1)
        self._changed: list[set[int]] = [set() for _ in range(self.levels + 1)]
        self._full_period = 2 ** self.levels

    # -- updates --------------------------------------------------------------

    def scale(self, j: int, u: float):
        diff = u - self.g[j]
        if diff == 0.0:
            return
        self.B += np.outer(self.A[j], diff * self.R[j])
        self.inner.scale(j, u)       # also sets self.g[j]
        for level in range(self.levels + 1):
            self._changed[level].add(int(j))

    # -- score estimation -------------------------------------------------------

    def _estimate(self, J, g, tau, psi_safe, delta: float, rng=None,
                  force_dense: bool = False) -> np.ndarray:
        """Estimates of sigma(GA)_j + d/n over J at multiplicative accuracy delta.

        Draws (fresh JL + sampling mask) are consumed in a fixed pattern that
        does not depend on J, so parallel runs stay in sync.
        """
        rng = rng if rng is not None else self._est_rng
        bt = max(1, math.ceil((delta / 8.0) ** -2 * self.lnn))
        use_jl = bt < self.n and not force_dense
        if use_jl:
            Rt = rng.choice([-1.0, 1.0], size=(self.n, bt)) / math.sqrt(bt)
        else:
            rng.choice([-1.0, 1.0], size=1)     # keep streams aligned
            Rt = None
        if tau is None:
            gs = g
            rng.random(self.n)
        else:
            p = np.minimum(1.0, self.sample_const * self.lnn * delta**-2 * tau)
            mask = rng.random(self.n) < p
            gs = np.where(mask, g / np.sqrt(np.maximum(p, 1e-300)), 0.0)
        AtG = self.A.T * gs
        W = psi_safe @ (AtG @ Rt if use_jl else AtG)     # (d, bt) or (d, n)
        J = np.asarray(list(J), dtype=int)
        if J.size == 0:
            return np.zeros(0)
        rows = (self.g[J, None] * self.A[J]) @ W
        return np.einsum("ij,ij->i", rows, rows) + self.d / self.n

    def estimate_score(self, J, delta: float, psi_safe: np.ndarray,
                       exact: bool = False, rng=None) -> np.ndarray:
        """Public per-index estimator at the current scaling.

        exact=True disables row sampling and the fresh JL sketch, so with an
        exact inverse handle the values equal sigma + d/n to rounding.
        """
        if exact:
            return self._estimate(J, self.g, None, psi_safe, delta,
                                  rng=make_rng(0), force_dense=True)
        return self._estimate(J, self.g, self.tau, psi_safe, delta, rng=rng)

    # -- detection ---------------------------------------------------------------

    def _find_indices(self, psi: np.ndarray) -> set[int]:
        out: set[int] = set()
        PB = psi @ self.B
        for level in range(self.levels + 1):
            if self.t % (2 ** level) != 0:
                continue
            snap = self._snap[level]
            if snap is None:
                continue
            F = set(self._changed[level])
            thresh = (self.eps / (48.0 * self.lnn)) * math.sqrt(
                self.d / (self.n * self.b))
            if self.candidates_full:
                J_level = set(range(self.n))
            else:
                W = self.inner.query_block(PB - snap.psi_b, F, thresh)
                J_level = F | set(np.nonzero(np.any(W != 0.0, axis=1))[0].tolist())
            delta = self.eps / (12.0 * self.lnn)
            J_sorted = sorted(J_level)
            v_now = self._estimate(J_sorted, self.g, self.tau, self._psi_safe, delta)
            v_old = self._estimate(J_sorted, snap.g, snap.tau, snap.psi_safe, delta)
            bound = self.eps / (3.0 * self.lnn)
            for pos, j in enumerate(J_sorted):
                if abs(math.log(v_now[pos]) - math.log(v_old[pos])) > bound:
                    out.add(j)
        return out

    # -- query ---------------------------------------------------------------------

    def query(self, psi: np.ndarray, psi_safe: np.ndarray) -> np.ndarray:
        """Fresh tau estimates given spectral inverse handles for A^T G^2 A."""
        self._psi_safe = np.asarray(psi_safe, dtype=float)
        psi = np.asarray(psi, dtype=float)
        full = self.tau is None or (self.t > 0 and self.t % self._full_period == 0)
        if full:
            first = self.tau is None
            vals = self._estimate(range(self.n), self.g,
                                  None if first else self.tau,
                                  self._psi_safe, self.eps)
            self.tau = vals
            self.t = 1
            self._reset_history(psi)
            return self.tau.copy()
        changed = self._find_indices(psi)
        J_sorted = sorted(changed)
        vals = self._estimate(J_sorted, self.g, self.tau, self._psi_safe, self.eps)
        for pos, j in enumerate(J_sorted):
            self.tau[j] = vals[pos]
        self._store_history(psi)
        self.t += 1
        return self.tau.copy()

    def _reset_history(self, psi: np.ndarray):
        snap = _Snapshot(self.g.copy(), self.tau.copy(), self._psi_safe.copy(),
                         psi @ self.B)
        for level in range(self.levels + 1):
            self._snap[level] = snap
            self._changed[level] = set()

    def _store_history(self, psi: np.ndarray):
        PB = psi @ self.B
        for level in range(self.levels + 1):
            if self.t % (2 ** level) == 0:
                self._snap[level] = _Snapshot(self.g.copy(), self.tau.copy(),
                                              self._psi_safe.copy(), PB)
                self._changed[level] = set()
