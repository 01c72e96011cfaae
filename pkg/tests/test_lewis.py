import math

import numpy as np
import pytest

from levlp.lewis import (LewisConvergenceError, LewisParams,
                         fixed_point_residual, lewis_map, lewis_weights,
                         theoretical_iteration_bound)
from levlp.linalg import leverage_scores

RNG = np.random.default_rng(13)


def rand_full_rank(n, d, rng=RNG):
    while True:
        A = rng.standard_normal((n, d))
        if np.linalg.matrix_rank(A) == d:
            return A


class TestMap:
    def test_p2_is_constant_in_w(self):
        A = rand_full_rank(12, 3)
        params = LewisParams(p=2.0, eta=0.25)
        w1 = RNG.uniform(0.5, 2.0, 12)
        w2 = RNG.uniform(0.1, 9.0, 12)
        expect = leverage_scores(A) + 0.25
        assert np.allclose(lewis_map(A, w1, params), expect)
        assert np.allclose(lewis_map(A, w2, params), expect)

    def test_square_fixed_point(self):
        A = rand_full_rank(4, 4)
        for p in (0.5, 1.0, 3.0):
            params = LewisParams(p=p, eta=0.3)
            w = np.full(4, 1.3)
            assert np.allclose(lewis_map(A, w, params), w)

    def test_contraction(self):
        A = rand_full_rank(20, 3)
        params = LewisParams(p=0.8, eta=0.15)
        rate = abs(params.p / 2 - 1)
        w = RNG.uniform(0.5, 2.0, 20)
        beta = 0.3
        v = w * np.exp(RNG.uniform(-beta, beta, 20))
        tv, tw = lewis_map(A, v, params), lewis_map(A, w, params)
        drift = np.max(np.abs(np.log(tv) - np.log(tw)))
        assert drift <= rate * beta + 1e-9

    def test_rejects_bad_params(self):
        with pytest.raises(ValueError):
            LewisParams(p=4.0, eta=0.1)
        with pytest.raises(ValueError):
            LewisParams(p=1.0, eta=0.0)

    def test_nonpositive_weights(self):
        A = rand_full_rank(5, 2)
        with pytest.raises(ValueError):
            lewis_map(A, np.zeros(5), LewisParams(p=1.0, eta=0.1))


class TestIteration:
    def test_p2_single_iteration(self):
        A = rand_full_rank(15, 3)
        params = LewisParams(p=2.0, eta=3 / 15, eps=0.01)
        w, its = lewis_weights(A, params)
        assert its == 1
        assert np.allclose(w, leverage_scores(A) + params.eta)

    def test_terminal_residual(self):
        n, d = 20, 3
        alpha = 1.0 / (4.0 * math.log(4 * n / d))
        p = 1.0 / (1.0 + alpha)
        for seed in range(20):
            A = rand_full_rank(n, d, np.random.default_rng(seed))
            params = LewisParams(p=p, eta=d / n, eps=0.01, max_iters=60)
            w, its = lewis_weights(A, params)
            assert fixed_point_residual(A, w, params) <= 0.01
            assert its <= 60
            assert np.all(w >= params.eta - 1e-12)

    def test_first_step_bound(self):
        # T(w0) stays within exp(p/(2 eta)) of w0 = eta * 1.
        A = rand_full_rank(25, 4)
        params = LewisParams(p=0.9, eta=4 / 25)
        w0 = np.full(25, params.eta)
        t0 = lewis_map(A, w0, params)
        bound = params.p / (2.0 * params.eta)
        assert np.max(np.abs(np.log(t0) - np.log(w0))) <= bound + 1e-9

    def test_iteration_count_bound(self):
        n, d = 30, 4
        params = LewisParams(p=0.9, eta=d / n, eps=0.01, max_iters=200)
        cap = theoretical_iteration_bound(params)
        for seed in range(5):
            A = rand_full_rank(n, d, np.random.default_rng(100 + seed))
            _, its = lewis_weights(A, params)
            assert its <= cap

    def test_budget_error(self):
        A = rand_full_rank(10, 2)
        params = LewisParams(p=0.5, eta=0.2, eps=1e-9, max_iters=1)
        with pytest.raises(LewisConvergenceError):
            lewis_weights(A, params)

    def test_sketched_variant_close_to_exact(self):
        A = rand_full_rank(60, 3)
        params = LewisParams(p=0.9, eta=3 / 60, eps=0.05, max_iters=100)
        w_exact, _ = lewis_weights(A, params)
        w_sk, _ = lewis_weights(A, params, sketch_eps=0.05,
                                rng=np.random.default_rng(0))
        assert np.max(np.abs(np.log(w_sk) - np.log(w_exact))) < 0.3
