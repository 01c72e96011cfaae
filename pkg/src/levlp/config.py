"""Solver constants and tuning profiles.

Two profiles are provided.  The "theory" profile uses the literal constants
(lambda, gamma, the 2^15 mu-step divisor); they make steps microscopically
small, so it is only usable for invariant checks on tiny instances.  The
"practical" profile keeps the same structure and asserts the same invariants
but picks lambda/gamma/mu-step so that desk-scale instances finish.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace


def weight_exponent(n: int, d: int) -> float:
    """alpha = 1/(4 ln(4n/d)); the exponent of the reweighted leverage scores."""
    if not (1 <= d <= n):
        raise ValueError(f"need 1 <= d <= n, got n={n}, d={d}")
    return 1.0 / (4.0 * math.log(4.0 * n / d))


@dataclass(frozen=True)
class IpmConstants:
    """Step-size and potential constants of the centering loop."""

    n: int
    d: int
    alpha: float
    eps: float
    lam: float
    gamma: float
    mu_step: float
    phi_break: float        # potential level below which mu may stop moving
    c_norm: float           # weight of the tau-norm inside the mixed norm
    profile: str

    @staticmethod
    def theory(n: int, d: int, eps: float | None = None) -> "IpmConstants":
        alpha = weight_exponent(n, d)
        if eps is None:
            eps = alpha / 16000.0
        if not (0 < eps <= alpha / 16000.0 + 1e-15):
            raise ValueError("theory profile requires eps <= alpha/16000")
        lam = (2.0 / eps) * math.log(2.0**16 * n * math.sqrt(d) / alpha**2)
        gamma = min(eps / 4.0, alpha / (50.0 * lam))
        mu_step = gamma * alpha / (2.0**15 * math.sqrt(d))
        phi_break = 2.0**16 * n * math.sqrt(d) / alpha**2
        return IpmConstants(n, d, alpha, eps, lam, gamma, mu_step, phi_break,
                            10.0 / alpha, "theory")

    @staticmethod
    def practical(n: int, d: int, eps: float = 0.25) -> "IpmConstants":
        # The endgame rounding needs terminal centrality within about 1/2;
        # the polish adds a hair, so cap eps at 0.45.
        eps = min(eps, 0.45)
        alpha = weight_exponent(n, d)
        lam = max(8.0, (2.0 / eps) * math.log(2.0 * n))
        # The step norms scale like 1.3 gamma in the mixed norm; eps/3 keeps
        # them under eps/2 with margin.
        gamma = eps / 3.0
        # Bulk response of the mixed-norm ball is gamma*alpha/(10*sqrt(2d));
        # run the mu schedule at ~0.9 of that capacity (measured drift stays
        # around 0.02 in log scale, far inside the 4*eps band).
        mu_step = gamma * alpha / (16.0 * math.sqrt(d))
        # Break once the potential certifies ||v - 1||_inf <= eps/2 + ln(2n)/lam.
        phi_break = 2.0 * n * math.exp(lam * eps / 2.0)
        return IpmConstants(n, d, alpha, eps, lam, gamma, mu_step, phi_break,
                            10.0 / alpha, "practical")

    def switch_budget(self) -> float:
        """Largest tolerated uniform relative slack jump at the cost switch.

        The theory profile uses the literal gamma alpha^2 / (4 sqrt(d)); at
        practical lambda the potential only needs lambda * jump = O(1).
        """
        if self.profile == "theory":
            return self.gamma * self.alpha**2 / (4.0 * math.sqrt(self.d))
        return min(self.eps / 4.0, 1.0 / self.lam)


@dataclass
class SolverConfig:
    """Everything tunable, with the defaults used by the CLI."""

    profile: str = "practical"
    mode: str = "exact"              # "exact" | "sketched"
    eps: float | None = None         # centering accuracy; None = profile default
    seed: int = 0

    # --- sketching ---
    hh_width_const: float = 4.0      # kappa in m = ceil(kappa eps^-2 ln^2 n)
    hh_width_cap_factor: int = 2     # cap sketch width at cap_factor * n
    hh_list_factor: float = 2.0      # candidate list length multiplier
    jl_const: float = 1.0            # kappa in k = ceil(kappa eps^-2 ln n)
    amv_reps: int | None = None      # None = 5*ceil(log2 n) (standalone default)
    struct_reps: int = 3             # repetitions used inside maintainers

    # --- inverse maintenance ---
    inv_gamma_const: float = 8.0     # c1 in gamma = c1 ln n
    richardson_step: float = 0.1     # literal step; "auto" mode overrides per call
    richardson_auto: bool = True     # steepest-descent step sizes + early exit
    richardson_rounds_const: float = 30.0
    noise_const: float = 1.0         # c3 in the masking term of secure solves
    woodbury_refresh_frac: float = 0.25  # refactor once update rank > frac*d
    solve_check: bool = False        # verify the preconditioner drift bound

    # --- leverage maintenance ---
    ls_jl_cols_const: int = 8        # b = const * ceil(ln n)
    ls_sample_const: float = 16.0    # Theta-constant of the sampling rate
    ls_candidates_full: bool = False # replace candidate detection by [n] (test hook)

    # --- feasibility machinery ---
    eps_b_const: float = 1.0         # scales eps_b = c * zeta eps^2/(sqrt(d) ln^2 n)
    eps_h_const: float = 1.0         # scales eps_H = c * zeta eps/(d^(1/4) ln^3 n)
    zeta: float = 1.0                # empirical; calibrated by the harness
    feas_window: int | None = None   # None = max(1, ceil(sqrt(d)/ln^6 n))

    # --- driver ---
    phase1_const: float = 64.0       # Theta-constant of the phase-1 mu target
    phase1_adaptive: bool = True     # switch early once the margin test holds
    reduction_accuracy_power: float = 0.0   # delta_red = delta/(8 n^power)
    max_iterations: int = 5_000_000
    spectral_slack: float = 1e-9     # slack of the PSD-order checks
    checkpoint_every: int = 64       # sketched-mode invariant checkpoints
    collect_trace: bool = False

    def constants(self, n: int, d: int) -> IpmConstants:
        if self.profile == "theory":
            return IpmConstants.theory(n, d, self.eps)
        if self.profile == "practical":
            return IpmConstants.practical(n, d, self.eps if self.eps else 0.25)
        raise ValueError(f"unknown profile {self.profile!r}")

    def with_(self, **kw) -> "SolverConfig":
        return replace(self, **kw)


DEFAULT = SolverConfig()
