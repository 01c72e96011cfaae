"""Centering potential, its dual-norm maximizer, and the bucketed cache that
keeps the steepest-descent direction and its A^T X product current.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import mixed_norm

EXP_CLIP = 500.0


def potential(v: np.ndarray, lam: float) -> float:
    """Phi(v) = sum exp(lam (v_i - 1)) + exp(-lam (v_i - 1)), exponent-clipped."""
    e = np.clip(lam * (np.asarray(v, dtype=float) - 1.0), -EXP_CLIP, EXP_CLIP)
    return float(np.sum(np.exp(e) + np.exp(-e)))


def potential_gradient(v: np.ndarray, lam: float) -> np.ndarray:
    e = np.clip(lam * (np.asarray(v, dtype=float) - 1.0), -EXP_CLIP, EXP_CLIP)
    return lam * (np.exp(e) - np.exp(-e))


def normalized_gradient(v: np.ndarray, lam: float) -> np.ndarray:
    """Gradient rescaled by its largest magnitude; safe for any lam.

    The dual-norm maximizer is invariant under positive rescaling of its
    input, so this is interchangeable with potential_gradient inside flat().
    """
    v = np.asarray(v, dtype=float)
    e = lam * np.abs(v - 1.0)
    m = float(np.max(e)) if e.size else 0.0
    pos = np.exp(np.clip(e - m, -EXP_CLIP, 0.0))
    neg = np.exp(np.clip(-e - m, -EXP_CLIP, 0.0))
    return np.sign(v - 1.0) * (pos - neg)


@dataclass(frozen=True)
class PotentialParams:
    lam: float

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lambda must be positive")


# ---------------------------------------------------------------------------
# flat: argmax of <g, w> over the ball ||w||_inf + c_norm ||w||_tau <= 1
# ---------------------------------------------------------------------------

def _flat_pieces(g_abs, tau, mult, c):
    """Sorted water-filling breakpoints and prefix data.

    Coordinates are sorted by r = g/tau descending.  Piece k fixes the first k
    coordinates saturated at the cap `a`; its validity interval in a follows
    from D_k = T_k + G_k / r_k^2 (consumed tau-budget at threshold r_k).
    """
    order = np.argsort(-g_abs / tau, kind="stable")
    gs = g_abs[order]
    ts = tau[order]
    ms = mult[order]
    r = gs / ts
    T = np.concatenate(([0.0], np.cumsum(ms * ts)))            # T[k], k=0..B
    S = np.concatenate(([0.0], np.cumsum(ms * gs)))            # sum of g over prefix
    Gq = ms * gs * gs / ts
    G = np.concatenate((np.cumsum(Gq[::-1])[::-1], [0.0]))     # G[k] = suffix sum
    return order, r, T, S, G


def _value_at(a, k, c, T, S, G):
    """V on piece k at cap a (arrays broadcast); returns -inf when infeasible."""
    b = (1.0 - a) / c
    f = b * b - a * a * T[k]
    bad = f < 0
    f = np.where(bad, 0.0, f)
    val = a * S[k] + np.sqrt(f * G[k])
    return np.where(bad, -np.inf, val)


def flat(g: np.ndarray, tau: np.ndarray, c_norm: float) -> np.ndarray:
    """Maximizer of <g, w> over the unit mixed-norm ball.

    Exact: the inner water-filling is solved piecewise and the concave outer
    1-D problem is maximized in closed form on every piece.
    """
    g = np.asarray(g, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0):
        raise ValueError("tau must be strictly positive")
    w = np.zeros_like(g)
    nz = np.nonzero(g)[0]
    if nz.size == 0:
        return w
    vals, _ = _flat_core(np.abs(g[nz]), tau[nz], np.ones(nz.size), c_norm)
    w[nz] = np.sign(g[nz]) * vals
    total = mixed_norm(w, tau, c_norm)
    if total > 1.0:
        w /= total
    return w


def _flat_core(g_abs, tau, mult, c):
    """Per-coordinate magnitudes of the maximizer; `mult` are multiplicities.

    Returns (w_values (aligned with input), attained value).
    """
    B = g_abs.size
    order, r, T, S, G = _flat_pieces(g_abs, tau, mult, c)
    # Piece-interval endpoints in a: (b/a)^2 = D_k <=> a = 1/(1 + c sqrt(D_k))
    D = T[1:] + G[1:] / np.where(r > 0, r * r, np.inf)          # D_k, k=1..B
    D = np.concatenate(([0.0], D))                              # D_0 = 0
    with np.errstate(divide="ignore"):
        a_bound = 1.0 / (1.0 + c * np.sqrt(D))                  # a at (b/a)^2 = D_k
    ks = np.arange(B + 1)
    a_hi = a_bound[ks]                                          # larger a end
    a_lo = np.concatenate((a_bound[1:], [0.0]))                 # smaller a end
    # Closed-form stationary points of V_k(a) = a S_k + sqrt(G_k f(a)).
    ic2 = 1.0 / (c * c)
    Tk, Sk, Gk = T[ks], S[ks], G[ks]
    A2 = Sk * Sk * (ic2 - Tk) - Gk * (Tk - ic2) ** 2
    A1 = -2.0 * Sk * Sk * ic2 - 2.0 * Gk * (Tk - ic2) * ic2
    A0 = Sk * Sk * ic2 - Gk * ic2 * ic2
    with np.errstate(invalid="ignore", divide="ignore"):
        disc = np.sqrt(np.maximum(A1 * A1 - 4.0 * A2 * A0, 0.0))
        roots = np.stack([
            np.where(A2 != 0, (-A1 + disc) / (2.0 * A2), -A0 / np.where(A1 != 0, A1, np.inf)),
            np.where(A2 != 0, (-A1 - disc) / (2.0 * A2), -A0 / np.where(A1 != 0, A1, np.inf)),
        ])
    cands = np.vstack([np.clip(roots, a_lo, a_hi), a_lo[None, :], a_hi[None, :]])
    cands = np.where(np.isfinite(cands), cands, 0.0)
    vals = _value_at(cands, ks[None, :], c, T, S, G)
    flat_idx = int(np.argmax(vals))
    ci, k = np.unravel_index(flat_idx, vals.shape)
    a = float(cands[ci, k])
    best = float(vals[ci, k])
    # Reconstruct w on the winning piece.
    b = (1.0 - a) / c
    if G[k] > 0:
        xi = math.sqrt(max(b * b - a * a * T[k], 0.0) / G[k])
    else:
        xi = math.inf
    w_sorted = np.minimum(a, xi * r)
    w = np.empty(B)
    w[order] = w_sorted
    return w, best


def flat_ternary(g: np.ndarray, tau: np.ndarray, c_norm: float,
                 tol: float = 1e-10) -> np.ndarray:
    """Ternary-search variant of flat(); kept as an independent cross-check."""
    g = np.asarray(g, dtype=float)
    tau = np.asarray(tau, dtype=float)
    w = np.zeros_like(g)
    nz = np.nonzero(g)[0]
    if nz.size == 0:
        return w
    g_abs, t = np.abs(g[nz]), tau[nz]
    mult = np.ones(nz.size)
    order, r, T, S, G = _flat_pieces(g_abs, t, mult, c_norm)
    D = T[1:] + G[1:] / np.where(r > 0, r * r, np.inf)
    D = np.concatenate(([0.0], D))

    def value(a):
        if a <= 0 or a >= 1:
            return 0.0
        ratio = ((1.0 - a) / (c_norm * a)) ** 2
        k = int(np.searchsorted(D, ratio, side="right")) - 1
        return float(_value_at(np.array(a), k, c_norm, T, S, G))

    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        m1 = lo + (hi - lo) / 3
        m2 = hi - (hi - lo) / 3
        if value(m1) < value(m2):
            lo = m1
        else:
            hi = m2
    a = 0.5 * (lo + hi)
    b = (1.0 - a) / c_norm
    ratio = (b / a) ** 2
    k = int(np.searchsorted(D, ratio, side="right")) - 1
    if G[k] > 0:
        xi = math.sqrt(max(b * b - a * a * T[k], 0.0) / G[k])
    else:
        xi = math.inf
    w_sorted = np.minimum(a, xi * r)
    wn = np.empty(nz.size)
    wn[order] = w_sorted
    w[nz] = np.sign(g[nz]) * wn
    total = mixed_norm(w, tau, c_norm)
    if total > 1.0:
        w /= total
    return w


# ---------------------------------------------------------------------------
# Bucketed maintenance of grad Phi(vbar)^flat and A^T X grad Phi(vbar)^flat
# ---------------------------------------------------------------------------

class RangeError(ValueError):
    pass


class GradientMaintainer:
    """Partition coordinates by rounded (v, tau); cache A^T X per bucket.

    v is rounded down to a grid of width eps/2 starting at v_lo; tau is
    rounded down to powers of (1 - eps).  Queries solve the maximizer on the
    bucket-aggregated problem and assemble the matrix product from the cache.
    """

    def __init__(self, A: np.ndarray, v: np.ndarray, tau: np.ndarray,
                 x: np.ndarray, eps: float, lam: float, c_norm: float,
                 v_lo: float = 0.5, v_hi: float = 2.0):
        self.A = np.asarray(A, dtype=float)
        self.n, self.d = self.A.shape
        self.eps = float(eps)
        self.lam = float(lam)
        self.c_norm = float(c_norm)
        self.v_lo, self.v_hi = v_lo, v_hi
        self.v = np.asarray(v, dtype=float).copy()
        self.tau = np.asarray(tau, dtype=float).copy()
        self.x = np.asarray(x, dtype=float).copy()
        self._members: dict[tuple[int, int], set[int]] = {}
        self._wcache: dict[tuple[int, int], np.ndarray] = {}
        self._key = [self._bucket(self.v[i], self.tau[i]) for i in range(self.n)]
        for i in range(self.n):
            self._insert(i)

    # -- bucketing ----------------------------------------------------------

    def _bucket(self, v: float, tau: float) -> tuple[int, int]:
        if not (self.v_lo <= v <= self.v_hi):
            raise RangeError(f"v={v} outside [{self.v_lo}, {self.v_hi}]")
        if not (0 < tau <= 2.0 + 1e-12):
            raise RangeError(f"tau={tau} outside (0, 2]")
        ell = int((v - self.v_lo) / (self.eps / 2.0))
        k = int(math.floor(math.log(tau) / math.log1p(-self.eps)))
        return (k, ell)

    def bucket_values(self, key: tuple[int, int]) -> tuple[float, float]:
        k, ell = key
        vbar = self.v_lo + ell * self.eps / 2.0
        taubar = (1.0 - self.eps) ** (k + 1)
        return vbar, taubar

    def _insert(self, i: int):
        key = self._bucket(self.v[i], self.tau[i])
        self._key[i] = key
        if key not in self._members:
            self._members[key] = set()
            self._wcache[key] = np.zeros(self.d)
        self._members[key].add(i)
        self._wcache[key] += self.x[i] * self.A[i]

    def _remove(self, i: int):
        key = self._key[i]
        self._members[key].discard(i)
        self._wcache[key] -= self.x[i] * self.A[i]
        if not self._members[key]:
            del self._members[key]
            del self._wcache[key]

    # -- operations ----------------------------------------------------------

    def update(self, i: int, v_new: float, tau_new: float, x_new: float):
        self._remove(i)
        self.v[i] = v_new
        self.tau[i] = tau_new
        self.x[i] = x_new
        self._insert(i)

    def rounded_vectors(self) -> tuple[np.ndarray, np.ndarray]:
        vb = np.empty(self.n)
        tb = np.empty(self.n)
        for key, members in self._members.items():
            vv, tt = self.bucket_values(key)
            idx = list(members)
            vb[idx] = vv
            tb[idx] = tt
        return vb, tb

    def query(self) -> tuple[np.ndarray, np.ndarray]:
        """(grad Phi(vbar)^flat, A^T X grad Phi(vbar)^flat) on the rounded data."""
        keys = list(self._members.keys())
        B = len(keys)
        vb = np.empty(B)
        tb = np.empty(B)
        mult = np.empty(B)
        for j, key in enumerate(keys):
            vb[j], tb[j] = self.bucket_values(key)
            mult[j] = len(self._members[key])
        if float(np.max(self.lam * np.abs(vb - 1.0))) < EXP_CLIP:
            grad = potential_gradient(vb, self.lam)
        else:
            grad = normalized_gradient(vb, self.lam)
        h = np.zeros(self.n)
        prod = np.zeros(self.d)
        nz = np.nonzero(grad)[0]
        if nz.size == 0:
            return h, prod
        wvals, _ = _flat_core(np.abs(grad[nz]), tb[nz], mult[nz], self.c_norm)
        tb_full = np.empty(self.n)
        for j, key in enumerate(keys):
            tb_full[list(self._members[key])] = tb[j]
        for pos, j in enumerate(nz):
            coeff = math.copysign(wvals[pos], grad[j])
            if coeff == 0.0:
                continue
            key = keys[j]
            idx = list(self._members[key])
            h[idx] = coeff
            prod += coeff * self._wcache[key]
        norm = mixed_norm(h, tb_full, self.c_norm)
        if norm > 1.0:
            h /= norm
            prod /= norm
        return h, prod

    # -- verification ----------------------------------------------------------

    def cache_error(self) -> float:
        worst = 0.0
        for key, members in self._members.items():
            idx = list(members)
            fresh = (self.x[idx] @ self.A[idx]) if idx else np.zeros(self.d)
            worst = max(worst, float(np.max(np.abs(self._wcache[key] - fresh))))
        return worst
