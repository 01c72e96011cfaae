import math

import numpy as np
import pytest

from levlp.invmaint import InverseMaintainer
from levlp.linalg import (GramFactorization, gram, leverage_scores,
                          spectral_approx_check)


def mk(n=80, d=5, eps=0.01, seed=0, **kw):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, d))
    w = rng.uniform(0.5, 2.0, n)
    tau = leverage_scores(np.sqrt(w)[:, None] * A) + d / n
    inv = InverseMaintainer(A, w, tau, eps, seed=seed, **kw)
    return A, w, tau, inv, rng


class TestInitialize:
    def test_small_n_keeps_exact_weights(self):
        # gamma eps^-2 tau >= 1 for every row at this scale: no subsampling
        A, w, tau, inv, _ = mk(n=40, d=4, eps=0.01)
        assert np.allclose(inv.v, w)
        direct = GramFactorization(gram(A, w)).solve(np.eye(4))
        assert np.allclose(inv.psi, direct, atol=1e-10)

    def test_sampling_unbiased(self):
        n, d = 4000, 2
        rng = np.random.default_rng(1)
        A = rng.standard_normal((n, d))
        w = rng.uniform(0.5, 2.0, n)
        tau = leverage_scores(np.sqrt(w)[:, None] * A) + d / n
        means = np.zeros(n)
        trials = 60
        for t in range(trials):
            inv = InverseMaintainer(A, w, tau, 0.25, seed=100 + t)
            means += inv.v
        means /= trials
        p = np.minimum(1.0, inv.gamma * 0.25**-2 * tau)
        sub = p < 1.0
        assert sub.sum() > n // 2          # the regime genuinely subsamples
        se = np.sqrt(w**2 * (1 - p) / np.maximum(p, 1e-12) / trials)
        off = np.abs(means - w) / np.maximum(se, 1e-12)
        assert np.mean(off[sub] < 4.0) > 0.98

    def test_spectral_approximation_rate(self):
        n, d, eps = 9000, 2, 0.25
        rng = np.random.default_rng(2)
        A = rng.standard_normal((n, d))
        w = rng.uniform(0.5, 2.0, n)
        tau = leverage_scores(np.sqrt(w)[:, None] * A) + d / n
        target = gram(A, w)
        passes = 0
        for seed in range(100):
            inv = InverseMaintainer(A, w, tau, eps, seed=seed)
            nz = np.nonzero(inv.v)[0]
            sampled = gram(A[nz], inv.v[nz])
            if spectral_approx_check(sampled, target, eps):
                passes += 1
        assert passes >= 95


class TestUpdate:
    def test_no_change_no_resample(self):
        A, w, tau, inv, _ = mk(seed=3)
        psi0 = inv.psi.copy()
        psi, w_alg = inv.update(w.copy(), tau.copy())
        assert inv.update_ranks[-1] == 0
        assert np.array_equal(psi, psi0)
        assert np.array_equal(w_alg, w)

    def test_single_large_change(self):
        A, w, tau, inv, _ = mk(n=60, d=4, seed=4)
        w2 = w.copy()
        w2[17] *= 3.0
        tau2 = leverage_scores(np.sqrt(w2)[:, None] * A) + 4 / 60
        inv.update(w2, tau2)
        assert inv.w_alg[17] == w2[17]
        assert inv.woodbury_error() < 1e-8

    def test_bucket_rule_hand_trace(self):
        # d=3 gives ceil(log2 d)=2, thresholds 1 - k/4.  With sorted |y| =
        # (1.3, 0.9, 0.2, 0.1, 0, ...) and unit tau mass per entry the rule
        # rejects k=0 (1.3 > 1), rejects k=1 (0.9 > 0.75 at i_1 = 2), and
        # accepts k=2 (|y[i_2]| = |y[4]| = 0 <= 0.5), updating 4 entries.
        n, d = 4, 3
        rng = np.random.default_rng(5)
        A = np.vstack([np.eye(3), rng.standard_normal((1, 3))])
        w = np.ones(n)
        tau = np.full(n, 1.0)
        inv = InverseMaintainer(A, w, tau, eps := 0.25, seed=0)
        w_new = w * (1 + np.array([1.3, 0.9, 0.0, 0.0]) * eps / 8)
        tau_new = tau * (1 + np.array([0.0, 0.0, 0.2, 0.1]) / 2)
        inv.update(w_new, tau_new)
        assert inv.update_ranks[-1] == 4
        assert np.allclose(inv.w_alg, w_new)
        assert np.allclose(inv.tau_alg, tau_new)

    def test_woodbury_tracks_direct_inverse(self):
        A, w, tau, inv, rng = mk(n=100, d=6, seed=6)
        w_cur, tau_cur = w.copy(), tau.copy()
        for step in range(40):
            i = rng.integers(0, 100, size=3)
            w_cur[i] *= np.exp(rng.uniform(-0.1, 0.1, size=3))
            tau_cur = leverage_scores(np.sqrt(w_cur)[:, None] * A) + 6 / 100
            inv.update(w_cur.copy(), tau_cur.copy())
            assert inv.woodbury_error() < 1e-8


class TestSolve:
    def test_fixed_point_with_exact_inverse(self):
        A, w, tau, inv, _ = mk(n=50, d=4, eps=0.01, seed=7,
                               noise_const=0.0)
        b = np.random.default_rng(0).standard_normal(4)
        y = inv.solve(b, w, 1e-9)
        exact = GramFactorization(gram(A, w)).solve(b)
        assert np.allclose(y, exact, atol=1e-8 * np.linalg.norm(exact))

    def test_secure_solve_noise_off_is_accurate(self):
        A, w, tau, inv, _ = mk(n=60, d=5, seed=8)
        b = np.random.default_rng(1).standard_normal(5)
        y = inv.secure_solve(b, w, 0.05, noise=False)
        M = gram(A, w)
        assert np.linalg.norm(M @ y - b) <= 1e-10 * np.linalg.norm(b)

    def test_block_solve_shapes(self):
        A, w, tau, inv, _ = mk(n=50, d=4, seed=9)
        B = np.eye(4)
        Y = inv.solve(B, w, 0.1)
        assert Y.shape == (4, 4)

    def test_unbiasedness_small(self):
        A, w, tau, inv, _ = mk(n=30, d=5, eps=0.1, seed=10)
        rng = np.random.default_rng(2)
        b = rng.standard_normal(5)
        exact = GramFactorization(gram(A, w)).solve(b)
        draws = np.vstack([inv.solve(b, w, 0.3) for _ in range(1500)])
        mean = draws.mean(axis=0)
        se = draws.std(axis=0, ddof=1) / math.sqrt(draws.shape[0])
        assert np.all(np.abs(mean - exact) <= 4.5 * np.maximum(se, 1e-14))

    def test_solve_drift_check_passes(self):
        A, w, tau, inv, _ = mk(n=40, d=4, seed=11, solve_check=True)
        b = np.random.default_rng(3).standard_normal(4)
        inv.solve(b, w, 0.2)
        assert inv.solve_retries == 0

    def test_ideal_solve_exact_when_quiet(self):
        A, w, tau, inv, _ = mk(n=40, d=4, seed=12, noise_const=0.0)
        b = np.random.default_rng(4).standard_normal(4)
        y = inv.ideal_solve(b, w, 1e-12)
        exact = GramFactorization(gram(A, w)).solve(b)
        assert np.allclose(y, exact, atol=1e-9)
