"""Regularized row weights by fixed-point iteration.

The map is contractive for p in (0,4) with rate |p/2 - 1|; the iteration
starts from the regularizer and stops once w matches its image within eps in
log-infinity distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import GramFactorization, gram, leverage_scores
from .sketching import jl_build


@dataclass(frozen=True)
class LewisParams:
    p: float
    eta: float
    eps: float = 0.01
    max_iters: int = 100

    def __post_init__(self):
        if not (0 < self.p < 4):
            raise ValueError("p must lie in (0, 4)")
        if self.eta <= 0:
            raise ValueError("eta must be positive")


class LewisConvergenceError(RuntimeError):
    pass


def lewis_map(A: np.ndarray, w: np.ndarray, params: LewisParams,
              sketch_eps: float | None = None, rng=None) -> np.ndarray:
    """One application of w -> (W^(2/p-1) (sigma(W^(1/2-1/p) A) + eta))^(p/2)."""
    w = np.asarray(w, dtype=float)
    if np.any(w <= 0):
        raise ValueError("weights must be strictly positive")
    p = params.p
    scaled = (w ** (0.5 - 1.0 / p))[:, None] * A
    if sketch_eps is None:
        sigma = leverage_scores(scaled)
    else:
        sigma = _sketched_leverage(scaled, sketch_eps, rng)
    return (w ** (2.0 / p - 1.0) * (sigma + params.eta)) ** (p / 2.0)


def _sketched_leverage(B: np.ndarray, eps: float, rng) -> np.ndarray:
    """JL estimate of leverage scores; optional path, off by default."""
    n, d = B.shape
    seed = rng.integers(2**63) if rng is not None else 0
    sk = jl_build(eps / 2.0, n, seed)
    fact = GramFactorization(gram(B))
    W = fact.solve(B.T @ sk.mat.T)           # (d, k)
    return np.einsum("ij,ij->i", B @ W, B @ W)


def lewis_weights(A: np.ndarray, params: LewisParams,
                  sketch_eps: float | None = None, rng=None) -> tuple[np.ndarray, int]:
    """Iterate the map from eta*1 until w matches T(w) within eps.

    Returns (w, iterations).  The returned w satisfies w >= eta entrywise and
    max_i |ln w_i - ln T(w)_i| <= eps.
    """
    n = A.shape[0]
    w = np.full(n, params.eta)
    for it in range(params.max_iters):
        Tw = lewis_map(A, w, params, sketch_eps, rng)
        resid = float(np.max(np.abs(np.log(w) - np.log(Tw))))
        if resid <= params.eps:
            return w, it
        w = Tw
    raise LewisConvergenceError(
        f"no fixed point within {params.max_iters} iterations "
        f"(p={params.p} may be too close to 4, or A badly conditioned)")


def fixed_point_residual(A: np.ndarray, w: np.ndarray, params: LewisParams) -> float:
    Tw = lewis_map(A, w, params)
    return float(np.max(np.abs(np.log(w) - np.log(Tw))))


def theoretical_iteration_bound(params: LewisParams) -> int:
    """ceil(log(eta^-1/eps)/log(1/|p/2-1|)) + 2; contraction-rate estimate."""
    rate = abs(params.p / 2.0 - 1.0)
    if rate == 0:
        return 1
    return math.ceil(math.log(max(1.0 / params.eta / params.eps, 1.1))
                     / math.log(1.0 / rate)) + 2
