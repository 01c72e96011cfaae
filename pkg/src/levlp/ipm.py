"""Robust primal-dual path following.

centering() drives (x, s) from one path parameter to another while keeping
x s multiplicatively close to mu * tau(x, s), where tau are the shifted
leverage scores of the reweighted constraint matrix.  The loop runs against a
workspace: ExactWorkspace recomputes everything from scratch (the reference),
SketchedWorkspace pulls every quantity out of the maintenance structures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .config import IpmConstants, SolverConfig
from .feasibility import FeasibilityManager, phi_b
from .gradmaint import GradientMaintainer, flat, normalized_gradient, potential
from .invmaint import InverseMaintainer
from .levmaint import LeverageMaintainer
from .linalg import COUNTER, GramFactorization, gram, mixed_norm, weighted_tau
from .sketching import make_rng
from .vecmaint import VectorMaintainer


class CentralityError(RuntimeError):
    pass


class IterationBudgetError(RuntimeError):
    pass


@dataclass
class PathState:
    x: np.ndarray
    s: np.ndarray
    mu: float
    tau: np.ndarray


@dataclass
class TraceRecord:
    iter: int
    mu: float
    phi: float
    phi_b: float
    dxnorm: float
    dsnorm: float


@dataclass
class CenterStats:
    iterations: int = 0
    held: int = 0
    max_centrality: float = 0.0
    max_dx: float = 0.0
    max_ds: float = 0.0
    max_dtau: float = 0.0
    trace: list[TraceRecord] = field(default_factory=list)


def _fast_tau(A: np.ndarray, x: np.ndarray, s: np.ndarray,
              alpha: float) -> np.ndarray:
    """weighted_tau without input validation; hot path of the exact mode."""
    scale = s ** (-0.5 - alpha) * x ** (0.5 - alpha)
    B = scale[:, None] * A
    n, d = B.shape
    COUNTER.gram += n * d * d
    COUNTER.factor += d**3 // 3
    cf = scipy.linalg.cho_factor(B.T @ B, lower=True, check_finite=False)
    Z = scipy.linalg.cho_solve(cf, B.T, check_finite=False)
    return np.einsum("ij,ji->i", B, Z) + d / n


def newton_direction(A: np.ndarray, xbar: np.ndarray, sbar: np.ndarray,
                     h: np.ndarray, alpha: float,
                     solver=None) -> tuple[np.ndarray, np.ndarray]:
    """Primal/dual moves for direction h against an inverse handle for
    A^T Sbar^-1 Xbar A (None = exact factorization)."""
    r = A.T @ (xbar * h)
    if solver is None:
        z = GramFactorization(gram(A, xbar / sbar)).solve(r)
    else:
        z = solver(r)
    Az = A @ z
    dx = (1.0 + 2.0 * alpha) * (xbar * h - (xbar / sbar) * Az)
    ds = (1.0 - 2.0 * alpha) * Az
    return dx, ds


# ---------------------------------------------------------------------------
# Workspaces
# ---------------------------------------------------------------------------

class ExactWorkspace:
    """Reference implementation: shadows equal the iterate, Gram inverses exact."""

    mode = "exact"

    def __init__(self, A: np.ndarray, b: np.ndarray, state: PathState,
                 consts: IpmConstants, cfg: SolverConfig, rng):
        self.A = A
        self.b = b
        self.consts = consts
        self.cfg = cfg
        self.rng = rng
        self.x = state.x.copy()
        self.s = state.s.copy()
        self.tau = state.tau.copy()
        # With exact Gram solves the Newton step keeps A^T x - b at rounding
        # level, so the projection can run on a sparse schedule.
        window = cfg.feas_window if cfg.feas_window is not None else 16
        self.feas = FeasibilityManager(
            A, b, consts.eps, A.shape[1], zeta=cfg.zeta,
            eps_b_const=cfg.eps_b_const, eps_h_const=cfg.eps_h_const,
            window=window, rng=rng, exact=True)
        self._pushed_v = None
        self._pushed_tau = None
        self._h_cache = None

    def refresh(self, mu: float):
        self.tau = _fast_tau(self.A, self.x, self.s, self.consts.alpha)
        return self.x, self.s, self.tau

    def gradient_step(self, vbar: np.ndarray, taubar: np.ndarray) -> np.ndarray:
        # The descent direction only needs vbar within gamma of v, so it is
        # refreshed lazily once the iterate drifts past gamma/4.
        g4 = self.consts.gamma / 4.0
        if (self._h_cache is None
                or np.max(np.abs(vbar - self._pushed_v)) > g4
                or np.max(np.abs(np.log(taubar) - np.log(self._pushed_tau))) > g4):
            g = normalized_gradient(vbar, self.consts.lam)
            self._h_cache = flat(g, taubar, self.consts.c_norm)
            self._pushed_v = vbar.copy()
            self._pushed_tau = taubar.copy()
        return self._h_cache

    def newton_step(self, h: np.ndarray):
        c = self.consts
        w = self.x / self.s
        B = self.A * np.sqrt(w)[:, None]
        n, d = B.shape
        COUNTER.gram += n * d * d
        COUNTER.factor += d**3 // 3
        cf = scipy.linalg.cho_factor(B.T @ B, lower=True, check_finite=False)
        r = self.A.T @ (self.x * h)
        z = scipy.linalg.cho_solve(cf, r, check_finite=False)
        Az = self.A @ z
        dx = (1.0 + 2.0 * c.alpha) * (self.x * h - w * Az)
        ds = (1.0 - 2.0 * c.alpha) * Az
        self.x = self.x + dx
        self.s = self.s + ds
        return dx, ds

    def feasibility_step(self, taubar: np.ndarray):
        delta = self.feas.step(self.x, self.s, taubar)
        if np.any(delta):
            self.x = self.x + (self.x / self.s) * (self.A @ delta)

    def exact_point(self) -> tuple[np.ndarray, np.ndarray]:
        return self.x, self.s

    def centrality_inputs(self, xbar, sbar, taubar):
        return self.x * self.s, taubar

    def state(self, mu: float) -> PathState:
        return PathState(self.x.copy(), self.s.copy(), mu, self.tau.copy())


class SketchedWorkspace:
    """All path quantities served by the maintenance structures.

    The shadow copies (xbar, sbar, taubar) lag the structure outputs within a
    gamma/8 band; every formula below uses only shadows, solver handles, and
    exact entries reconstructed by the vector maintainers.
    """

    mode = "sketched"

    def __init__(self, A: np.ndarray, b: np.ndarray, state: PathState,
                 consts: IpmConstants, cfg: SolverConfig, rng):
        self.A = A
        self.b = b
        self.consts = consts
        self.cfg = cfg
        self.rng = rng
        c = consts
        n, d = A.shape
        self.lnn = math.log(max(n, 3))
        seed = np.random.SeedSequence(int(rng.integers(2**63)))
        s_inv, s_ls, s_vx, s_vs, s_feas = seed.spawn(5)
        self.xbar = state.x.copy()
        self.sbar = state.s.copy()
        self.taubar = state.tau.copy()
        self.x_tmp = state.x.copy()
        self.s_tmp = state.s.copy()
        self.tau_tmp = state.tau.copy()
        self.acc_inv = min(0.25, max(1e-6, c.gamma / (512.0 * self.lnn)))
        self.acc_newton = min(0.25, c.eps / (4.0 * d**0.25 * self.lnn**3))
        w_alpha = self._w_alpha()
        self.inv = InverseMaintainer(
            A, w_alpha, self.taubar, self.acc_inv, seed=s_inv,
            gamma_const=cfg.inv_gamma_const, richardson_step=cfg.richardson_step,
            richardson_auto=cfg.richardson_auto,
            rounds_const=cfg.richardson_rounds_const,
            noise_const=cfg.noise_const,
            refresh_frac=cfg.woodbury_refresh_frac, solve_check=cfg.solve_check)
        self._w_alg = self.inv.w_alg.copy()
        self.ls = LeverageMaintainer(
            A, np.sqrt(self._w_alg), min(0.25, c.gamma / 8.0), seed=s_ls,
            reps=cfg.struct_reps, sample_const=cfg.ls_sample_const,
            jl_cols_const=cfg.ls_jl_cols_const,
            candidates_full=cfg.ls_candidates_full)
        self.vm_x = VectorMaintainer(A, self.xbar / self.sbar, state.x,
                                     c.gamma / 8.0, seed=s_vx,
                                     reps=cfg.struct_reps, strict=False)
        self.vm_s = VectorMaintainer(A, np.ones(n), state.s, c.gamma / 8.0,
                                     seed=s_vs, reps=cfg.struct_reps,
                                     strict=False)
        self.gm = GradientMaintainer(A, np.ones(n), np.minimum(self.taubar, 2.0),
                                     self.xbar, c.gamma, c.lam, c.c_norm,
                                     v_lo=0.25, v_hi=4.0)
        self._pushed_v = np.ones(n)
        self._gm_dirty = True
        self._gm_cache = None
        self._gm_stale: set[int] = set()
        self._psi_safe_cache = None
        self._psi_safe_age = 0
        self._feas_x_ref = self.x_tmp.copy()
        self._feas_s_ref = self.s_tmp.copy()
        # Near-exact solves keep the residual drift tiny between projections.
        window = cfg.feas_window if cfg.feas_window is not None else 8
        self.feas = FeasibilityManager(
            A, b, c.eps, d, zeta=cfg.zeta, eps_b_const=cfg.eps_b_const,
            eps_h_const=cfg.eps_h_const, window=window,
            rng=make_rng(s_feas), exact=False)

    def _w_alpha(self) -> np.ndarray:
        a = self.consts.alpha
        return self.sbar ** (-1.0 - 2.0 * a) * self.xbar ** (1.0 - 2.0 * a)

    def refresh(self, mu: float):
        g8 = self.consts.gamma / 8.0
        ch_x = np.nonzero(np.abs(np.log(self.xbar) - np.log(self.x_tmp)) > g8)[0]
        ch_s = np.nonzero(np.abs(np.log(self.sbar) - np.log(self.s_tmp)) > g8)[0]
        ch_t = np.nonzero(np.abs(np.log(self.taubar) - np.log(self.tau_tmp)) > g8)[0]
        self.xbar[ch_x] = self.x_tmp[ch_x]
        self.sbar[ch_s] = self.s_tmp[ch_s]
        self.taubar[ch_t] = self.tau_tmp[ch_t]
        for i in np.union1d(ch_x, ch_s):
            self.vm_x.scale(int(i), self.xbar[i] / self.sbar[i])
        for i in ch_x:
            self._gm_stale.add(int(i))
        for i in ch_t:
            self._gm_stale.add(int(i))
        return self.xbar, self.sbar, self.taubar

    def gradient_step(self, vbar: np.ndarray, taubar: np.ndarray) -> np.ndarray:
        g4 = self.consts.gamma / 4.0
        stale = set(np.nonzero(np.abs(vbar - self._pushed_v) > g4)[0].tolist())
        stale |= self._gm_stale
        self._gm_stale = set()
        for i in stale:
            ii = int(i)
            self.gm.update(ii, float(np.clip(vbar[ii], 0.25, 4.0)),
                           min(self.taubar[ii], 2.0), self.xbar[ii])
            self._pushed_v[ii] = vbar[ii]
            self._gm_dirty = True
        if self._gm_dirty or self._gm_cache is None:
            self._gm_cache = self.gm.query()
            self._gm_dirty = False
        h, self._grad_prod = self._gm_cache
        return h

    def newton_step(self, h: np.ndarray):
        c = self.consts
        gamma_r = c.gamma * self._grad_prod          # A^T Xbar (gamma * h_dir)
        h = c.gamma * h
        z = self.inv.solve(gamma_r, self.xbar / self.sbar, self.acc_newton)
        x_new = self.vm_x.query(-(1.0 + 2.0 * c.alpha) * z,
                                (1.0 + 2.0 * c.alpha) * self.xbar * h)
        s_new = self.vm_s.query((1.0 - 2.0 * c.alpha) * z, np.zeros(self.A.shape[0]))
        dx = x_new - self.x_tmp
        ds = s_new - self.s_tmp
        self.x_tmp = x_new
        self.s_tmp = s_new
        self._update_structures()
        return dx, ds

    def _update_structures(self):
        w_alpha = self._w_alpha()
        psi_alpha, w_alg = self.inv.update(w_alpha, self.taubar)
        changed = np.nonzero(w_alg != self._w_alg)[0]
        for j in changed:
            self.ls.scale(int(j), math.sqrt(w_alg[j]))
        self._w_alg = w_alg
        # The safe handle only goes stale when the maintained sample moved,
        # and the scores only need a fresh query after a rescale.
        if changed.size or self._psi_safe_cache is None or self._psi_safe_age >= 8:
            self._psi_safe_cache = self.inv.solve(np.eye(self.A.shape[1]),
                                                  w_alpha, self.acc_inv)
            self._psi_safe_age = 0
            self.tau_tmp = self.ls.query(psi_alpha, self._psi_safe_cache)
        else:
            self._psi_safe_age += 1
            if self._psi_safe_age % 4 == 0:
                self.tau_tmp = self.ls.query(psi_alpha, self._psi_safe_cache)

    def feasibility_step(self, taubar: np.ndarray):
        # Idle path: between projections, and with the iterate barely moved,
        # the estimator is identically-zero noise; probe with the maintained
        # approximations and only materialize exact entries when acting.
        boundary = (self.feas.counter + 1) % self.feas.window == 0
        moved = max(
            float(np.max(np.abs(np.log(self.x_tmp) - np.log(self._feas_x_ref)))),
            float(np.max(np.abs(np.log(self.s_tmp) - np.log(self._feas_s_ref)))))
        if not boundary and moved <= self.consts.gamma / 32.0:
            self.feas.counter += 1
            return
        x_exact = self.vm_x.compute_exact_all()
        s_exact = self.vm_s.compute_exact_all()
        self._feas_x_ref = self.x_tmp.copy()
        self._feas_s_ref = self.s_tmp.copy()
        delta = self.feas.step(x_exact, s_exact, taubar,
                               solver_now=lambda rhs: self.inv.solve(
                                   rhs, self.xbar / self.sbar, self.acc_newton),
                               skip_tol=self.consts.gamma / 32.0)
        if np.any(delta):
            x_new = self.vm_x.query(delta, np.zeros(self.A.shape[0]))
            self.x_tmp = x_new

    def exact_point(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vm_x.compute_exact_all(), self.vm_s.compute_exact_all()

    def centrality_inputs(self, xbar, sbar, taubar):
        x, s = self.exact_point()
        tau = weighted_tau(self.A, x, s, self.consts.alpha)
        return x * s, tau

    def state(self, mu: float) -> PathState:
        x, s = self.exact_point()
        return PathState(x, s, mu, self.tau_tmp.copy())


# ---------------------------------------------------------------------------
# The centering loop
# ---------------------------------------------------------------------------

def centering(A: np.ndarray, b: np.ndarray, state: PathState, mu_target: float,
              consts: IpmConstants, cfg: SolverConfig | None = None,
              rng=None, max_iters: int | None = None,
              assert_invariants: bool = True,
              early_stop=None) -> tuple[PathState, CenterStats]:
    """Move along the central path from state.mu to mu_target.

    early_stop(mu, workspace), if given, may end the run before mu_target;
    it is polled only at centered iterates (the break condition still
    requires the potential to certify centrality).
    """
    cfg = cfg or SolverConfig()
    rng = rng if rng is not None else make_rng(cfg.seed)
    c = consts
    if cfg.mode == "exact":
        ws = ExactWorkspace(A, b, state, c, cfg, rng)
    else:
        ws = SketchedWorkspace(A, b, state, c, cfg, rng)
    mu = float(state.mu)
    stats = CenterStats()
    budget = max_iters if max_iters is not None else cfg.max_iterations
    check_every = 1 if cfg.mode == "exact" else cfg.checkpoint_every
    poll_every = max(4, 8 * check_every)
    band = 4.0 * c.eps * (1.0 + 1e-6) + 1e-9
    dx = ds = None

    while True:
        xbar, sbar, taubar = ws.refresh(mu)
        vbar = mu * taubar / (xbar * sbar)
        phi = potential(vbar, c.lam)

        if assert_invariants and stats.iterations % check_every == 0:
            w_exact, tau_exact = ws.centrality_inputs(xbar, sbar, taubar)
            gap = float(np.max(np.abs(np.log(w_exact) - np.log(mu * tau_exact))))
            stats.max_centrality = max(stats.max_centrality, gap)
            if gap > band:
                raise CentralityError(
                    f"centrality {gap:.4f} > 4 eps = {4*c.eps:.4f} at "
                    f"iteration {stats.iterations}")
            if dx is not None:
                x_now, s_now = ws.exact_point()
                dxn = mixed_norm(dx / x_now, tau_exact, c.c_norm)
                dsn = mixed_norm(ds / s_now, tau_exact, c.c_norm)
                stats.max_dx = max(stats.max_dx, dxn)
                stats.max_ds = max(stats.max_ds, dsn)
                if cfg.collect_trace:
                    fb = phi_b(A, b, x_now, x_now, s_now, mu)
                    stats.trace.append(TraceRecord(stats.iterations, mu, phi,
                                                   fb, dxn, dsn))

        if mu == mu_target and phi <= c.phi_break:
            break
        if (early_stop is not None and mu != mu_target
                and stats.iterations % poll_every == 0
                and early_stop(mu, ws)):
            mu_target = mu    # latch: settle here, then exit once centered
        if stats.iterations >= budget:
            raise IterationBudgetError(
                f"centering exceeded {budget} iterations (mu={mu:.3e}, "
                f"target={mu_target:.3e}, phi={phi:.3e})")

        h_dir = ws.gradient_step(vbar, taubar)
        if cfg.mode == "exact":
            dx, ds = ws.newton_step(c.gamma * h_dir)
        else:
            dx, ds = ws.newton_step(h_dir)
        ws.feasibility_step(taubar)
        # Hold the path parameter while the iterate recenters; pausing is
        # always admissible and makes the schedule self-correcting when a
        # high-leverage coordinate lags the bulk response.
        if float(np.max(np.abs(vbar - 1.0))) > 1.5 * c.eps:
            stats.held += 1
        elif mu > mu_target:
            mu = max(mu_target, (1.0 - c.mu_step) * mu)
        elif mu < mu_target:
            mu = min(mu_target, (1.0 + c.mu_step) * mu)
        stats.iterations += 1
    return ws.state(mu), stats
