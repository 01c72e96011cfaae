import math

import numpy as np
import pytest

from levlp.feasibility import (draw_truncation_length, exact_correction,
                               make_h2_h4, maintain_infeasibility, phi_b,
                               sample_delta_b)
from levlp.linalg import GramFactorization, gram
from levlp.sketching import make_rng


def setup_point(n=30, d=3, seed=0, infeasible=0.0):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, d))
    x = rng.uniform(0.5, 2.0, n)
    s = rng.uniform(0.5, 2.0, n)
    b = A.T @ x
    if infeasible:
        x = x * (1 + infeasible * rng.uniform(-1, 1, n))
    return A, b, x, s


class TestPhiB:
    def test_feasible_point_zero(self):
        A, b, x, s = setup_point()
        assert phi_b(A, b, x, x, s, 1.0) <= 1e-20

    def test_mu_scaling(self):
        A, b, x, s = setup_point(infeasible=0.1)
        v1 = phi_b(A, b, x, x, s, 1.0)
        v2 = phi_b(A, b, x, x, s, 2.0)
        assert v2 == pytest.approx(v1 / 2.0)

    def test_nonnegative(self):
        A, b, x, s = setup_point(infeasible=0.3, seed=4)
        assert phi_b(A, b, x, x, s, 0.5) > 0


class TestExactCorrection:
    def test_feasible_unchanged(self):
        A, b, x, s = setup_point(seed=1)
        x2 = exact_correction(A, b, x, s)
        assert np.allclose(x2, x, atol=1e-10)

    def test_exact_solver_gives_feasible(self):
        A, b, x, s = setup_point(seed=2, infeasible=0.2)
        x2 = exact_correction(A, b, x, s)
        assert phi_b(A, b, x2, x, s, 1.0) <= 1e-16 * max(1.0, phi_b(A, b, x, x, s, 1.0))

    def test_contraction_with_noisy_solver(self):
        # H within eps_H = 0.05 of the Gram: contraction factor <= 5 eps_H
        eps_h = 0.05
        worst = 0.0
        for seed in range(50):
            A, b, x, s = setup_point(seed=100 + seed, infeasible=0.2)
            Q = gram(A, x / s)
            rng = np.random.default_rng(seed)
            E = rng.standard_normal(Q.shape)
            E = 0.5 * (E + E.T)
            E *= eps_h / max(1e-12, float(np.max(np.abs(np.linalg.eigvalsh(E)))))
            sq = np.linalg.cholesky(Q)
            H = sq @ (np.eye(Q.shape[0]) + E) @ sq.T
            solver = GramFactorization(H).solve
            before = phi_b(A, b, x, x, s, 1.0)
            x2 = exact_correction(A, b, x, s, solver=solver)
            after = phi_b(A, b, x2, x, s, 1.0)
            worst = max(worst, after / before)
        assert worst <= 5 * eps_h

    def test_movement_bounded_by_sqrt_phib(self):
        A, b, x, s = setup_point(seed=3, infeasible=0.05)
        before = phi_b(A, b, x, x, s, 1.0)
        x2 = exact_correction(A, b, x, s)
        move = np.max(np.abs(x2 - x) / x)
        assert move <= 10.0 * math.sqrt(before) + 1e-12


class TestSampleDeltaB:
    def test_all_kept_is_exact(self):
        A, b, x, s = setup_point(seed=5, infeasible=0.1)
        tau = np.full(30, 0.5)
        db = sample_delta_b(A, b, x, tau, eps_b=0.4, rng=make_rng(0))
        assert np.allclose(db, b - A.T @ x)

    def test_unbiased(self):
        A, b, x, s = setup_point(seed=6, infeasible=0.2)
        tau = np.full(30, 0.2)
        rng = make_rng(1)
        draws = np.vstack([sample_delta_b(A, b, x, tau, 0.9, rng)
                           for _ in range(10000)])
        want = b - A.T @ x
        se = draws.std(axis=0, ddof=1) / math.sqrt(draws.shape[0])
        assert np.all(np.abs(draws.mean(axis=0) - want) <= 4 * np.maximum(se, 1e-14))

    def test_direction_fluctuation_quantile(self):
        # |v^T (db - E db)| = O(sqrt(eps_b) log(1/rho)) in the local geometry
        n, d = 40, 3
        rng0 = np.random.default_rng(7)
        A = rng0.standard_normal((n, d))
        x = rng0.uniform(0.9, 1.1, n)
        b = A.T @ x
        s = np.full(n, 2.0)
        mu = 2.0            # x s approx mu tau-ish scale
        tau = np.full(n, 2 * d / n)
        eps_b, rho = 0.01, 0.05
        Q = gram(A, x / s)
        v = rng0.standard_normal(d)
        v /= math.sqrt(mu) * math.sqrt(float(v @ Q @ v))
        rng = make_rng(2)
        want = b - A.T @ x
        hits = 0
        trials = 400
        bound = 10.0 * math.sqrt(eps_b) * math.log(1.0 / rho)
        for _ in range(trials):
            db = sample_delta_b(A, b, x, tau, eps_b, rng)
            if abs(v @ (db - want)) <= bound:
                hits += 1
        assert hits >= (1 - rho) * trials


class TestGeometricTruncation:
    def test_scalar_identity(self):
        rng = make_rng(3)
        for a in (0.1, 0.3, 0.45):
            draws = []
            for _ in range(100000):
                X = draw_truncation_length(rng)
                acc, term = 0.0, 1.0
                for _ in range(X):
                    term *= 2.0 * a
                    acc += term
                draws.append(acc)
            draws = np.asarray(draws)
            want = a / (1.0 - a)
            se = draws.std(ddof=1) / math.sqrt(draws.size)
            assert abs(draws.mean() - want) <= 4 * se


class TestH2H4:
    def _pair(self, seed=0, n=20, d=3, shift=0.05):
        rng = np.random.default_rng(seed)
        A = rng.standard_normal((n, d))
        x = rng.uniform(0.8, 1.2, n)
        s = rng.uniform(0.8, 1.2, n)
        xp = x * np.exp(rng.uniform(-shift, shift, n))
        sp = s * np.exp(rng.uniform(-shift, shift, n))
        tau = np.full(n, 2 * d / n)
        return A, x, s, xp, sp, tau

    def test_identical_points_give_zero(self):
        A, x, s, _, _, tau = self._pair(seed=1)
        rng = make_rng(4)
        h2, h4 = make_h2_h4(A, x, s, x.copy(), s.copy(), tau, 0.1, rng)
        v = np.random.default_rng(0).standard_normal(3)
        assert np.allclose(h2(v), 0.0)
        assert np.allclose(h4(v), 0.0)

    def test_h2_unbiased(self):
        A, x, s, xp, sp, tau = self._pair(seed=2)
        droot = np.sqrt(x / s)
        want = A.T @ ((droot * (droot - np.sqrt(xp / sp)))[:, None] * A)
        rng = make_rng(5)
        acc = np.zeros((3, 3))
        trials = 4000
        samples = np.zeros((trials, 3, 3))
        for t in range(trials):
            h2, _ = make_h2_h4(A, x, s, xp, sp, tau, 0.3, rng)
            samples[t] = np.column_stack([h2(e) for e in np.eye(3)])
        mean = samples.mean(axis=0)
        se = samples.std(axis=0, ddof=1) / math.sqrt(trials)
        assert np.all(np.abs(mean - want) <= 4.5 * np.maximum(se, 1e-14))

    def test_h4_unbiased_matches_inverse_difference(self):
        A, x, s, xp, sp, tau = self._pair(seed=3, shift=0.04)
        Q = gram(A, x / s)
        Qp = gram(A, xp / sp)
        want = np.linalg.inv(Q) - np.linalg.inv(Qp)
        rng = make_rng(6)
        trials = 5000
        samples = np.zeros((trials, 3, 3))
        for t in range(trials):
            _, h4 = make_h2_h4(A, x, s, xp, sp, tau, 0.3, rng)
            samples[t] = np.column_stack([h4(e) for e in np.eye(3)])
        mean = samples.mean(axis=0)
        se = samples.std(axis=0, ddof=1) / math.sqrt(trials)
        assert np.all(np.abs(mean - want) <= 4.5 * np.maximum(se, 1e-12))

    def test_divergence_guard(self):
        A, x, s, xp, sp, tau = self._pair(seed=4)
        with pytest.raises(ValueError):
            make_h2_h4(A, x, s, 3 * x, s, tau, 0.1, make_rng(0))


class TestMaintainInfeasibility:
    def test_feasible_stationary_zero(self):
        A, b, x, s = setup_point(seed=8)
        tau = np.full(30, 0.2)
        delta = maintain_infeasibility(A, b, x, s, x.copy(), s.copy(), tau,
                                       eps_b=10.0, eps_h=0.1, rng=make_rng(1))
        assert np.allclose(delta, 0.0)

    def test_correction_reduces_residual_in_expectation(self):
        n, d = 24, 3
        rng0 = np.random.default_rng(9)
        A = rng0.standard_normal((n, d))
        x = rng0.uniform(0.9, 1.1, n)
        b = A.T @ x
        s = rng0.uniform(0.9, 1.1, n)
        xp = x * np.exp(rng0.uniform(-0.03, 0.03, n))
        sp = s * np.exp(rng0.uniform(-0.03, 0.03, n))
        x_off = x * (1 + 0.01 * rng0.uniform(-1, 1, n))
        tau = np.full(n, 2 * d / n)
        rng = make_rng(7)
        # the expected move tracks the analytic correction direction
        draws = np.zeros((3000, d))
        for t in range(3000):
            draws[t] = maintain_infeasibility(A, b, x_off, s, xp, sp, tau,
                                              0.5, 0.25, rng)
        Q = gram(A, x_off / s)
        Qp = gram(A, xp / sp)
        droot = np.sqrt(x_off / s)
        h2 = A.T @ ((droot * (droot - np.sqrt(xp / sp)))[:, None] * A)
        resid = b - A.T @ x_off
        want = (np.linalg.inv(Q) @ h2 @ np.linalg.inv(Qp) @ resid
                + (np.linalg.inv(Q) - np.linalg.inv(Qp)) @ resid)
        se = draws.std(axis=0, ddof=1) / math.sqrt(draws.shape[0])
        assert np.all(np.abs(draws.mean(axis=0) - want) <= 4.5 * np.maximum(se, 1e-12))
