import math

import numpy as np
import pytest

from levlp.linalg import (GramFactorization, SingularMatrixError, gram,
                          lambda_matrix, leverage_scores, mixed_norm,
                          regularized_tau, solve_normal, spectral_approx_check,
                          weighted_tau)

RNG = np.random.default_rng(7)


def rand_full_rank(n, d, rng=RNG):
    while True:
        A = rng.standard_normal((n, d))
        if np.linalg.matrix_rank(A) == d:
            return A


class TestLeverageScores:
    def test_identity(self):
        assert np.allclose(leverage_scores(np.eye(3)), np.ones(3))

    def test_two_row_column_by_hand(self):
        # P = A (A^T A)^-1 A^T with A = [[1],[1]] is the all-1/2 matrix.
        A = np.array([[1.0], [1.0]])
        assert np.allclose(leverage_scores(A), [0.5, 0.5], atol=1e-14)

    def test_trace_equals_rank(self):
        A = rand_full_rank(6, 2)
        assert abs(leverage_scores(A).sum() - 2.0) < 1e-10

    def test_range_and_sum_random(self):
        for _ in range(20):
            n = int(RNG.integers(5, 60))
            d = int(RNG.integers(1, min(n, 8)))
            A = rand_full_rank(n, d)
            sig = leverage_scores(A)
            assert np.all(sig > 0) and np.all(sig <= 1 + 1e-12)
            assert abs(sig.sum() - d) < 1e-8

    def test_row_scaling_invariance_square(self):
        # Square invertible: P = I regardless of row scaling.
        A = rand_full_rank(4, 4)
        D = RNG.uniform(0.1, 10.0, size=4)
        assert np.allclose(leverage_scores(D[:, None] * A), np.ones(4))

    def test_rank_deficient_raises(self):
        A = np.ones((5, 2))
        with pytest.raises(SingularMatrixError):
            leverage_scores(A)


class TestRegularizedTau:
    def test_hand_value(self):
        A = np.array([[1.0], [1.0]])
        assert np.allclose(regularized_tau(A), [1.0, 1.0])

    def test_identity(self):
        assert np.allclose(regularized_tau(np.eye(2)), [2.0, 2.0])

    def test_sum_is_2d(self):
        for _ in range(10):
            A = rand_full_rank(30, 4)
            assert abs(regularized_tau(A).sum() - 8.0) < 1e-8


class TestWeightedTau:
    def test_square_invertible_is_two(self):
        A = rand_full_rank(3, 3)
        x = RNG.uniform(0.5, 2.0, 3)
        s = RNG.uniform(0.5, 2.0, 3)
        assert np.allclose(weighted_tau(A, x, s, 0.1), 2.0 * np.ones(3))

    def test_all_ones_reduces_to_regularized(self):
        A = np.array([[1.0], [1.0]])
        got = weighted_tau(A, np.ones(2), np.ones(2), 0.07)
        assert np.allclose(got, regularized_tau(A))

    def test_entry_bounds(self):
        A = rand_full_rank(40, 5)
        x = RNG.uniform(0.5, 2.0, 40)
        s = RNG.uniform(0.5, 2.0, 40)
        tau = weighted_tau(A, x, s, 0.05)
        assert np.all(tau > 5 / 40) and np.all(tau <= 1 + 5 / 40 + 1e-12)

    def test_sandwich_of_unweighted_scores(self):
        # Scores of the alpha-reweighted matrix stay within a factor 2 of the
        # plain sqrt(x/s) reweighting at a centered point.
        n, d = 50, 4
        A = rand_full_rank(n, d)
        alpha = 1.0 / (4.0 * math.log(4 * n / d))
        x = np.ones(n)
        s = regularized_tau(A)           # centered-ish: x s close to tau
        from levlp.linalg import leverage_scores as sig
        lev_alpha = weighted_tau(A, x, s, alpha) - d / n
        lev_plain = sig((s ** -0.5 * x ** 0.5)[:, None] * A)
        assert np.all(0.5 * lev_alpha <= lev_plain + 1e-12)
        assert np.all(lev_plain <= 2.0 * lev_alpha + 1e-12)

    def test_nonpositive_rejected(self):
        A = rand_full_rank(5, 2)
        with pytest.raises(ValueError):
            weighted_tau(A, np.zeros(5), np.ones(5), 0.1)


class TestSolveNormal:
    def test_identity(self):
        rhs = RNG.standard_normal(4)
        assert np.allclose(solve_normal(np.eye(4), np.ones(4), rhs), rhs)

    def test_zero_rhs(self):
        A = rand_full_rank(10, 3)
        assert np.allclose(solve_normal(A, np.ones(10), np.zeros(3)), 0.0)

    def test_residual_bound(self):
        for _ in range(10):
            A = rand_full_rank(30, 5)
            w = RNG.uniform(0.1, 10.0, 30)
            rhs = RNG.standard_normal(5)
            y = solve_normal(A, w, rhs)
            M = gram(A, w)
            assert np.linalg.norm(M @ y - rhs) <= 1e-9 * np.linalg.norm(rhs)


class TestMixedNorm:
    def test_zero(self):
        assert mixed_norm(np.zeros(3), np.ones(3), 2.0) == 0.0

    def test_hand_value(self):
        assert abs(mixed_norm(np.array([1.0]), np.array([1.0]), 2.0) - 3.0) < 1e-15

    def test_homogeneity_and_triangle(self):
        for _ in range(30):
            n = int(RNG.integers(1, 12))
            tau = RNG.uniform(0.1, 2.0, n)
            c = float(RNG.uniform(0.5, 20.0))
            u = RNG.standard_normal(n)
            v = RNG.standard_normal(n)
            t = float(RNG.uniform(0.0, 3.0))
            assert abs(mixed_norm(t * u, tau, c) - t * mixed_norm(u, tau, c)) < 1e-12
            assert (mixed_norm(u + v, tau, c)
                    <= mixed_norm(u, tau, c) + mixed_norm(v, tau, c) + 1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            mixed_norm(np.ones(3), np.ones(2), 1.0)


class TestSpectralCheck:
    def test_equal_matrices(self):
        A = rand_full_rank(10, 4)
        M = gram(A)
        assert spectral_approx_check(M, M, 0.0)

    def test_factor_two(self):
        A = rand_full_rank(10, 4)
        M = gram(A)
        assert spectral_approx_check(2 * M, M, math.log(2.0))
        assert not spectral_approx_check(2 * M, M, 0.5)

    def test_small_perturbation(self):
        A = rand_full_rank(12, 4)
        M = gram(A)
        E = RNG.standard_normal((4, 4))
        E = 1e-4 * (E + E.T) * np.linalg.norm(M) / 4
        assert spectral_approx_check(M + E, M, 0.01)

    def test_non_pd_rejected(self):
        with pytest.raises(SingularMatrixError):
            spectral_approx_check(np.eye(2), np.diag([1.0, -1.0]), 0.1)


class TestLambdaMatrix:
    def test_identity_gives_zero(self):
        assert np.allclose(lambda_matrix(np.eye(4)), 0.0)

    def test_psd_sandwich(self):
        A = rand_full_rank(20, 3)
        L = lambda_matrix(A)
        sig = leverage_scores(A)
        evals = np.linalg.eigvalsh(L)
        assert evals.min() > -1e-10
        evals_gap = np.linalg.eigvalsh(np.diag(sig) - L)
        assert evals_gap.min() > -1e-10

    def test_finite_difference_jacobian(self):
        # d sigma(W A)/d w [h] = 2 Lambda(W A) W^-1 h, central differences.
        n, d = 12, 3
        A = rand_full_rank(n, d)
        w = RNG.uniform(0.5, 2.0, n)
        h = RNG.standard_normal(n)
        step = 1e-6
        sp = leverage_scores((w + step * h)[:, None] * A)
        sm = leverage_scores((w - step * h)[:, None] * A)
        fd = (sp - sm) / (2 * step)
        analytic = 2.0 * lambda_matrix(w[:, None] * A) @ (h / w)
        denom = np.linalg.norm(fd) + 1e-12
        assert np.linalg.norm(fd - analytic) / denom < 1e-5
