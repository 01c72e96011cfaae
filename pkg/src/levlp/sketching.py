"""Randomized sketches: l2 heavy hitters, JL norm estimates, and the
scaled matrix-vector product structure built on both.

All randomness comes from counter-based Philox generators so every structure
is replayable from its seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def as_seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def _log2n(n: int) -> float:
    return math.log2(max(n, 2))


# ---------------------------------------------------------------------------
# l2 heavy hitter sketch (bucketed sign hashes, median decode)
# ---------------------------------------------------------------------------

@dataclass
class HeavyHitterSketch:
    """c sign-hash tables packed into m total rows.

    Each column has exactly c nonzeros (one per table), so applying the sketch
    or updating one column touches c rows.
    """

    eps: float
    n: int
    m: int
    c: int
    seed: int
    rows: np.ndarray    # (c, n) global row index per table/column
    signs: np.ndarray   # (c, n) +-1

    def apply(self, x: np.ndarray) -> np.ndarray:
        y = np.zeros(self.m)
        for t in range(self.c):
            np.add.at(y, self.rows[t], self.signs[t] * x)
        return y

    def apply_matrix(self, X: np.ndarray) -> np.ndarray:
        """Sketch the columns of an (n, d) matrix at once -> (m, d)."""
        Y = np.zeros((self.m, X.shape[1]))
        for t in range(self.c):
            np.add.at(Y, self.rows[t], self.signs[t][:, None] * X)
        return Y

    def column_update(self, Y: np.ndarray, i: int, coeff: float, row: np.ndarray):
        """Y += coeff * Phi e_i row^T, touching c rows of Y."""
        Y[self.rows[:, i]] += (coeff * self.signs[:, i])[:, None] * row

    def estimates(self, y: np.ndarray) -> np.ndarray:
        """Per-index magnitude estimates: median over tables of sign * bucket."""
        vals = self.signs * y[self.rows]
        return np.median(vals, axis=0)

    def estimates_block(self, Y: np.ndarray) -> np.ndarray:
        """Estimates for every column of a sketched block -> (n, b)."""
        vals = self.signs[:, :, None] * Y[self.rows]
        return np.median(vals, axis=0)


def hh_build(eps: float, n: int, seed, width_const: float = 4.0) -> HeavyHitterSketch:
    """Deterministic-given-seed sketch with m = ceil(width_const eps^-2 ln^2 n)."""
    if not (0 < eps <= 1):
        raise ValueError("eps must lie in (0, 1]")
    if n < 1:
        raise ValueError("n must be positive")
    ln2 = math.log(n) ** 2
    c = max(1, math.ceil(ln2))
    m = max(c, math.ceil(width_const * eps**-2 * ln2))
    rng = make_rng(seed)
    # Partition the m rows into c tables of near-equal width.
    base, extra = divmod(m, c)
    widths = np.full(c, base)
    widths[:extra] += 1
    offsets = np.concatenate(([0], np.cumsum(widths)[:-1]))
    rows = np.empty((c, n), dtype=np.int64)
    for t in range(c):
        rows[t] = offsets[t] + rng.integers(0, widths[t], size=n)
    signs = rng.choice([-1.0, 1.0], size=(c, n))
    return HeavyHitterSketch(eps, n, m, c, seed, rows, signs)


def hh_decode(sk: HeavyHitterSketch, y: np.ndarray,
              list_factor: float = 2.0) -> np.ndarray:
    """Candidate heavy coordinates of the sketched vector, largest first.

    Best-effort: the caller is expected to verify candidates exactly.  List
    length is O(eps^-2 log n).
    """
    est = np.abs(sk.estimates(y))
    k = min(sk.n, math.ceil(list_factor * sk.eps**-2 * max(1.0, _log2n(sk.n))))
    if k >= sk.n:
        order = np.argsort(-est, kind="stable")
        return order
    idx = np.argpartition(-est, k - 1)[:k]
    return idx[np.argsort(-est[idx], kind="stable")]


# ---------------------------------------------------------------------------
# JL sketch (Rademacher +-1/sqrt(k))
# ---------------------------------------------------------------------------

@dataclass
class JlSketch:
    eps: float
    n: int
    k: int
    seed: int
    mat: np.ndarray  # (k, n)


def jl_build(eps: float, n: int, seed, jl_const: float = 1.0,
             k_override: int | None = None) -> JlSketch:
    if eps <= 0:
        raise ValueError("eps must be positive")
    if k_override is not None:
        k = k_override
    else:
        k = max(1, math.ceil(jl_const * eps**-2 * math.log(max(n, 2))))
    rng = make_rng(seed)
    mat = rng.choice([-1.0, 1.0], size=(k, n)) / math.sqrt(k)
    return JlSketch(eps, n, k, seed, mat)


def jl_apply(sk: JlSketch, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape[0] != sk.n:
        raise ValueError("dimension mismatch")
    return sk.mat @ v


# ---------------------------------------------------------------------------
# Approximate matrix-vector product: heavy entries of G A h under updates to G
# ---------------------------------------------------------------------------

class ApproxMatVec:
    """Maintains sketches of G A so queries can report the entries of G A h
    with magnitude >= eps, each verified exactly before being returned.

    Per-level sketches at eps = 2^-j cover the possible norm scales; a JL
    sketch picks the level.  Failures (missed candidates) are one-sided: a
    reported entry is always the exact value.
    """

    def __init__(self, A: np.ndarray, g: np.ndarray, seed=0, reps: int | None = None,
                 width_const: float = 4.0, width_cap_factor: int = 2,
                 list_factor: float = 2.0, force_exact: bool = False):
        A = np.asarray(A, dtype=float)
        self.A = A
        self.n, self.d = A.shape
        self.g = np.asarray(g, dtype=float).copy()
        self.force_exact = force_exact
        self.levels = max(1, math.ceil(_log2n(self.n) / 2))
        self.reps = reps if reps is not None else 5 * math.ceil(_log2n(self.n))
        self.list_factor = list_factor
        root = as_seed_sequence(seed)
        jl_seed, *rep_seeds = root.spawn(self.reps + 1)
        self._jl = jl_build(0.25, self.n, jl_seed)
        GA = self.g[:, None] * A
        self._jl_mat = self._jl.mat @ GA          # (k, d)
        self.sketches: list[list[HeavyHitterSketch]] = []
        cap = max(width_cap_factor * self.n, 1)
        offsets: list[list[int]] = []
        total = 0
        for r in range(self.reps):
            level_seeds = rep_seeds[r].spawn(self.levels)
            row_sk, row_off = [], []
            for j in range(1, self.levels + 1):
                sk = hh_build(2.0**-j, self.n, level_seeds[j - 1], width_const)
                if sk.m > cap:
                    sk = _shrink_sketch(sk, cap, level_seeds[j - 1])
                row_sk.append(sk)
                row_off.append(total)
                total += sk.m
            self.sketches.append(row_sk)
            offsets.append(row_off)
        self._offsets = offsets
        # All sketched matrices stacked so one indexed add covers every
        # repetition and level during a scale.
        self._stacked = np.zeros((total, self.d))
        rows_cat, signs_cat = [], []
        for r in range(self.reps):
            for j in range(self.levels):
                sk = self.sketches[r][j]
                off = offsets[r][j]
                self._stacked[off:off + sk.m] = sk.apply_matrix(GA)
                rows_cat.append(sk.rows + off)
                signs_cat.append(sk.signs)
        self._cat_rows = np.concatenate(rows_cat, axis=0)
        self._cat_signs = np.concatenate(signs_cat, axis=0)

    def _sketched(self, r: int, j: int) -> np.ndarray:
        sk = self.sketches[r][j]
        off = self._offsets[r][j]
        return self._stacked[off:off + sk.m]

    # -- updates ------------------------------------------------------------

    def scale(self, i: int, u: float):
        diff = u - self.g[i]
        if diff == 0.0:
            return
        row = self.A[i]
        self._jl_mat += np.outer(diff * self._jl.mat[:, i], row)
        np.add.at(self._stacked, self._cat_rows[:, i],
                  (diff * self._cat_signs[:, i])[:, None] * row)
        self.g[i] = u

    # -- queries ------------------------------------------------------------

    def _exact_entry(self, i: int, h: np.ndarray) -> float:
        return float(self.g[i] * (self.A[i] @ h))

    def norm_estimate(self, h: np.ndarray) -> float:
        return float(np.linalg.norm(self._jl_mat @ h))

    def query(self, h: np.ndarray, eps: float) -> np.ndarray:
        """Dense n-vector with v_i = (G A h)_i exactly where |.| >= eps, else 0."""
        h = np.asarray(h, dtype=float)
        if eps <= 0:
            raise ValueError("eps must be positive")
        r = self.norm_estimate(h)
        j = 1 + math.ceil(math.log2(max(r / eps, 1e-300)))
        decode_cost = self.reps * (self.sketches[0][0].m * self.d
                                   + self.n * self.sketches[0][0].c)
        if (self.force_exact or j >= self.levels
                or r / eps >= math.sqrt(self.n)
                or self.n * self.d <= decode_cost):
            exact = self.g * (self.A @ h)
            out = np.where(np.abs(exact) >= eps, exact, 0.0)
            return out
        j = max(1, j)
        out = np.zeros(self.n)
        seen = np.zeros(self.n, dtype=bool)
        for rep in range(self.reps):
            sk = self.sketches[rep][j - 1]
            y = self._sketched(rep, j - 1) @ h
            for i in hh_decode(sk, y, self.list_factor):
                if seen[i]:
                    continue
                seen[i] = True
                val = self._exact_entry(int(i), h)
                if abs(val) >= eps:
                    out[i] = val
        return out

    def query_block(self, H: np.ndarray, exclude, eps: float) -> np.ndarray:
        """Thresholded (I-F) G A H for a (d, b) block H, F = rows in `exclude`.

        Columns whose norm overwhelms the threshold are computed exactly (the
        budget argument), which at small n is nearly always.
        """
        H = np.asarray(H, dtype=float)
        mask = np.ones(self.n, dtype=bool)
        excl = list(exclude)
        if excl:
            mask[np.asarray(excl, dtype=int)] = False
        b = H.shape[1]
        out = np.zeros((self.n, b))
        norms = np.linalg.norm(self._jl_mat @ H, axis=0)
        cheap = norms / eps >= math.sqrt(self.n)
        # One dense product beats per-column decoding whenever the sketch
        # machinery would touch comparable data anyway; identical output.
        decode_cost = self.reps * (self.sketches[0][0].m * self.d
                                   + self.n * self.sketches[0][0].c)
        if (self.force_exact or np.all(cheap)
                or self.n * self.d <= decode_cost):
            exact = (self.g[:, None] * (self.A @ H))
            out = np.where(np.abs(exact) >= eps, exact, 0.0)
            out[~mask] = 0.0
            return out
        for col in range(b):
            v = self.query(H[:, col], eps)
            v[~mask] = 0.0
            out[:, col] = v
        return out

    def exact_product(self, h: np.ndarray) -> np.ndarray:
        return self.g * (self.A @ h)

    def recompute_check(self, atol: float = 1e-12) -> float:
        """Max deviation of the stored sketched matrices from scratch recompute."""
        GA = self.g[:, None] * self.A
        worst = float(np.max(np.abs(self._jl_mat - self._jl.mat @ GA)))
        for r in range(self.reps):
            for j in range(self.levels):
                fresh = self.sketches[r][j].apply_matrix(GA)
                worst = max(worst,
                            float(np.max(np.abs(self._sketched(r, j) - fresh))))
        return worst


def _shrink_sketch(sk: HeavyHitterSketch, cap: int, seed_seq) -> HeavyHitterSketch:
    """Rebuild the sketch with at most `cap` rows (same table count)."""
    c = min(sk.c, cap)
    m = cap
    rng = make_rng(seed_seq)
    base, extra = divmod(m, c)
    widths = np.full(c, base)
    widths[:extra] += 1
    offsets = np.concatenate(([0], np.cumsum(widths)[:-1]))
    rows = np.empty((c, sk.n), dtype=np.int64)
    for t in range(c):
        rows[t] = offsets[t] + rng.integers(0, widths[t], size=sk.n)
    signs = rng.choice([-1.0, 1.0], size=(c, sk.n))
    return HeavyHitterSketch(sk.eps, sk.n, m, c, sk.seed, rows, signs)
