"""Maintain x(t) = x0 + sum_k G(k) A h(k) + delta(k) multiplicatively.

Two layers: AccumulatedProduct approximates one window of the sum with
additive error (scaled heavy-hitter queries plus exact bookkeeping for
rescaled rows); VectorMaintainer stacks log n of them over dyadic windows and
converts additive to relative error via per-level scalings.
"""

from __future__ import annotations

import math

import numpy as np

from .sketching import ApproxMatVec, as_seed_sequence


class StabilityError(RuntimeError):
    """The stream violated the per-step multiplicative stability contract."""


class AccumulatedProduct:
    """Window sum  sum_k G(k) A h(k)  with exact entries for touched rows.

    Query reports entries above an additive threshold (verified exactly) and
    the exact value for every row rescaled or marked since the last query;
    compute_exact() reproduces any entry of the last-queried window from the
    scaling journal.
    """

    def __init__(self, A: np.ndarray, g: np.ndarray, seed=0, reps: int = 3,
                 force_exact: bool = False):
        self.A = np.asarray(A, dtype=float)
        self.n, self.d = self.A.shape
        self.inner = ApproxMatVec(self.A, g, seed=seed, reps=reps,
                                  force_exact=force_exact)
        self.g = self.inner.g          # shared view of the live scaling
        self.t = 0
        self.h_list: list[np.ndarray] = []
        self.marked: set[int] = set()
        # journal[i] = {step k: scaling increment applied at step k}
        self.journal: dict[int, dict[int, float]] = {}
        # snapshots from the last query
        self._snap_g_old = self.inner.g.copy()
        self._snap_journal: dict[int, dict[int, float]] = {}
        self._snap_suffix = np.zeros((1, self.d))   # suffix sums of h, 1-indexed
        self._snap_rows = np.zeros(0, dtype=np.int64)
        self._snap_steps = np.zeros(0, dtype=np.int64)
        self._snap_diffs = np.zeros(0)

    def update(self, h: np.ndarray):
        self.t += 1
        self.h_list.append(np.asarray(h, dtype=float))

    def scale(self, i: int, u: float):
        diff = u - self.g[i]
        if diff != 0.0:
            steps = self.journal.setdefault(i, {})
            steps[self.t + 1] = steps.get(self.t + 1, 0.0) + diff
        self.inner.scale(i, u)
        self.marked.add(i)

    def mark_exact(self, i: int):
        self.marked.add(int(i))

    def _exact_from(self, i: int, g_old, journal, suffix) -> float:
        t_max = suffix.shape[0] - 1
        val = g_old[i] * float(self.A[i] @ suffix[1]) if t_max >= 1 else 0.0
        for k, diff in journal.get(i, {}).items():
            if k <= t_max:
                val += diff * float(self.A[i] @ suffix[k])
        return val

    def compute_exact(self, i: int) -> float:
        """Entry i of the window summed at the last query."""
        return self._exact_from(int(i), self._snap_g_old, self._snap_journal,
                                self._snap_suffix)

    def compute_exact_all(self) -> np.ndarray:
        """All entries of the last-queried window; vectorized twin of the above."""
        suffix = self._snap_suffix
        if suffix.shape[0] <= 1:
            base = np.zeros(self.n)
        else:
            base = self._snap_g_old * (self.A @ suffix[1])
        if self._snap_rows.size:
            vals = self._snap_diffs * np.einsum(
                "ij,ij->i", self.A[self._snap_rows], suffix[self._snap_steps])
            np.add.at(base, self._snap_rows, vals)
        return base

    def query(self, eps: float) -> np.ndarray:
        # Snapshot the window for later compute_exact calls.
        if self.t:
            hs = np.vstack(self.h_list)
            suffix = np.zeros((self.t + 1, self.d))
            suffix[1:] = np.cumsum(hs[::-1], axis=0)[::-1]
        else:
            suffix = np.zeros((1, self.d))
        self._snap_suffix = suffix
        self._snap_journal = {i: dict(v) for i, v in self.journal.items()}
        # Flat triplet view of the journal for the vectorized reconstruction.
        if self.journal:
            trip = [(i, k, diff) for i, steps in self.journal.items()
                    for k, diff in steps.items() if k <= self.t]
        else:
            trip = []
        if trip:
            arr = np.asarray(trip, dtype=float)
            self._snap_rows = arr[:, 0].astype(np.int64)
            self._snap_steps = arr[:, 1].astype(np.int64)
            self._snap_diffs = arr[:, 2]
        else:
            self._snap_rows = np.zeros(0, dtype=np.int64)
            self._snap_steps = np.zeros(0, dtype=np.int64)
            self._snap_diffs = np.zeros(0)
        # g_old of this window is g before any of its scale calls.
        g_old = self.g.copy()
        for i, steps in self.journal.items():
            g_old[i] -= sum(steps.values())
        self._snap_g_old = g_old

        v = np.zeros(self.n)
        touched = sorted(self.marked)
        for i in touched:
            v[i] = self.compute_exact(i)
        if self.t:
            saved = [self.g[i] for i in touched]
            for i in touched:
                self.inner.scale(i, 0.0)
            v = v + self.inner.query(suffix[1], eps)
            for i, gi in zip(touched, saved):
                self.inner.scale(i, gi)
        # Reset the window.
        self.t = 0
        self.h_list = []
        self.journal = {}
        self.marked = set()
        return v


class VectorMaintainer:
    """Dyadic stack of AccumulatedProduct windows with per-level scalings.

    The output after query t is x0 + sum over set bits of t of the level
    windows; every reported correction is exact, so the output is a
    deterministic function of the input stream whenever the sketches succeed.
    """

    def __init__(self, A: np.ndarray, g: np.ndarray, x0: np.ndarray, eps: float,
                 seed=0, reps: int = 3, force_exact: bool = False,
                 strict: bool = True, period: int | None = None):
        self.A = np.asarray(A, dtype=float)
        self.n, self.d = self.A.shape
        x0 = np.asarray(x0, dtype=float)
        if np.any(x0 == 0):
            raise ValueError("initial vector must be entrywise nonzero")
        self.eps = float(eps)
        self.strict = strict
        self.stability_violations = 0
        # Exact recompute + rebuild after `period` queries; the dyadic levels
        # must cover the binary representation of the query counter.
        self.period = period if period is not None else max(self.n, 2048)
        self.levels = max(1, math.ceil(math.log2(max(self.period, 2))))
        self._seed_root = as_seed_sequence(seed)
        self._reps = reps
        self._force_exact = force_exact
        self._reinit(np.asarray(g, dtype=float).copy(), x0.copy())

    def _reinit(self, g: np.ndarray, x0: np.ndarray):
        self.g = g
        self.x0 = x0
        self.t = 1
        self.y = x0.copy()
        seeds = self._seed_root.spawn(self.levels + 1)
        self._D: list[AccumulatedProduct] = []
        self._z_live: list[np.ndarray] = []      # scale base of the open window
        self._z_q: list[np.ndarray] = []         # scale base of the closed window
        self._F: list[set[int]] = []
        self._v: list[np.ndarray] = []
        self._delta_acc: list[np.ndarray] = []
        self._delta_win: list[np.ndarray] = []
        per_level = self.eps / (4.0 * self.levels)
        self._level_eps = per_level
        for ell in range(self.levels + 1):
            z = x0.copy()
            self._z_live.append(z)
            self._z_q.append(z.copy())
            self._D.append(AccumulatedProduct(self.A, g / z, seed=seeds[ell],
                                              reps=self._reps,
                                              force_exact=self._force_exact))
            self._F.append(set())
            self._v.append(np.zeros(self.n))
            self._delta_acc.append(np.zeros(self.n))
            self._delta_win.append(np.zeros(self.n))

    def scale(self, i: int, u: float):
        self.g[i] = u
        for ell in range(self.levels + 1):
            self._D[ell].scale(i, u / self._z_live[ell][i])

    def _fix_entry(self, ell: int, i: int):
        self._v[ell][i] = (self._z_q[ell][i] * self._D[ell].compute_exact(i)
                           + self._delta_win[ell][i])
        self._D[ell].mark_exact(i)
        self._F[ell].add(i)

    def query(self, h: np.ndarray, delta: np.ndarray) -> np.ndarray:
        h = np.asarray(h, dtype=float)
        delta = np.asarray(delta, dtype=float)
        y_prev = self.y
        # One vectorized drift scan across all levels.
        Z = np.vstack(self._z_live)
        ratio = Z / y_prev[None, :]
        drift_lv, drift_ix = np.nonzero((ratio < 8.0 / 9.0) | (ratio > 9.0 / 8.0))
        for ell, i in zip(drift_lv.tolist(), drift_ix.tolist()):
            if i not in self._F[ell]:
                self._fix_entry(ell, i)
        for ell in range(self.levels + 1):
            D = self._D[ell]
            D.update(h)
            self._delta_acc[ell] += delta
            z = self._z_live[ell]
            if self.t % (2 ** ell) == 0:
                self._v[ell] = (z * D.query(self._level_eps)
                                + self._delta_acc[ell])
                self._z_q[ell] = z.copy()
                for i in self._F[ell]:
                    z[i] = y_prev[i]
                    D.scale(i, self.g[i] / z[i])
                self._delta_win[ell] = self._delta_acc[ell].copy()
                self._delta_acc[ell] = np.zeros(self.n)
                self._F[ell] = set()
        y = self.x0.copy()
        tt = self.t
        for ell in range(self.levels + 1):
            if (tt >> ell) & 1:
                y += self._v[ell]
        self._check_stability(y_prev, y)
        self.y = y
        self.t += 1
        if self.t > self.period:
            exact = self.compute_exact_all()
            self._reinit(self.g.copy(), exact)
            return exact
        return y

    def _check_stability(self, y_prev: np.ndarray, y: np.ndarray):
        band = math.exp(2 * self.eps)
        lo = (8.0 / 9.0) / band
        hi = (9.0 / 8.0) * band
        ratio = y / y_prev
        if np.any(ratio < lo) or np.any(ratio > hi):
            self.stability_violations += 1
            if self.strict:
                raise StabilityError(
                    "per-step multiplicative stability bound violated")

    def compute_exact(self, i: int) -> float:
        """Exact entry of the state reported by the last query."""
        i = int(i)
        val = float(self.x0[i])
        tt = self.t - 1
        for ell in range(self.levels + 1):
            if (tt >> ell) & 1:
                val += (self._z_q[ell][i] * self._D[ell].compute_exact(i)
                        + self._delta_win[ell][i])
        return val

    def compute_exact_all(self) -> np.ndarray:
        val = self.x0.copy()
        tt = self.t - 1
        for ell in range(self.levels + 1):
            if (tt >> ell) & 1:
                val += (self._z_q[ell] * self._D[ell].compute_exact_all()
                        + self._delta_win[ell])
        return val
