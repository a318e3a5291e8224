import warnings

import numpy as np
import pytest
import scipy.sparse as sp

from conftest import rel, small_problem, suite_oracle, suite_problem, unit_problem
from sparse_lse import LseProblem
from sparse_lse.augmented import (
    SaddleOperator,
    build_preconditioner,
    default_parameters,
    regularization_exponent,
    solve_lagrange,
    solve_qr_update,
    solve_reg_cholesky,
    solve_reg_krylov,
    solve_three_block,
    solve_weighted_normal,
)
from sparse_lse.errors import NonConvergenceError, NotPositiveDefiniteError
from sparse_lse.sparse import as_csc


def kkt_residual(prob, x, lam):
    g = prob.A.T @ (prob.b - prob.A @ x) - prob.C.T @ lam
    return np.linalg.norm(g) / np.linalg.norm(prob.A.T @ prob.b)


def unconstrained(prob):
    x, *_ = np.linalg.lstsq(prob.A.toarray(), prob.b, rcond=None)
    return x


class TestLagrange:
    def test_no_constraints(self, rng):
        A = as_csc(rng.standard_normal((20, 6)))
        prob = LseProblem(A, sp.csc_matrix((0, 6)), rng.standard_normal(20), np.zeros(0))
        assert rel(solve_lagrange(prob).x, unconstrained(prob)) <= 1e-12

    @pytest.mark.parametrize("route", ["qr", "normal"])
    def test_hand_kkt(self, route):
        rep = solve_lagrange(unit_problem(), route=route)
        np.testing.assert_allclose(rep.x, [1.0, 0.0, 0.0], atol=1e-15)
        # A^T(b - Ax) = C^T lambda gives lambda = -1
        np.testing.assert_allclose(rep.multiplier, [-1.0], rtol=1e-15)

    @pytest.mark.parametrize("route", ["qr", "normal"])
    def test_random_against_oracle(self, route):
        prob = suite_problem(7)
        x_star, lam_star = suite_oracle(7)
        rep = solve_lagrange(prob, route=route)
        assert rel(rep.x, x_star) <= 1e-8
        assert rel(rep.multiplier, lam_star) <= 1e-7
        assert kkt_residual(prob, rep.x, rep.multiplier) <= 1e-8

    def test_rank_deficient_a_suggests_regularization(self):
        # column 2 of A is null, C pins it down
        A = as_csc(np.array([[1.0, 1.0, 0.0], [1.0, -1.0, 0.0], [0.0, 2.0, 0.0], [1.0, 0.0, 0.0]]))
        C = as_csc(np.array([[0.0, 0.0, 1.0]]))
        prob = LseProblem(A, C, np.ones(4), np.ones(1))
        with pytest.raises(NotPositiveDefiniteError, match="reg"):
            solve_lagrange(prob, route="normal")
        rep = solve_lagrange(prob, reg=1e-6, route="normal")
        assert rep.norm_rc <= 1e-10


class TestQrUpdate:
    def test_satisfied_constraints_give_zero_correction(self):
        prob0 = small_problem(5)
        y = unconstrained(prob0)
        prob = LseProblem(prob0.A, prob0.C, prob0.b, prob0.C @ y)
        rep = solve_qr_update(prob)
        assert rel(rep.x, y) <= 1e-12
        assert np.linalg.norm(rep.multiplier) <= 1e-10

    def test_random_against_oracle(self):
        prob = suite_problem(8)
        x_star, lam_star = suite_oracle(8)
        rep = solve_qr_update(prob)
        assert rep.iters == 0
        assert rel(rep.x, x_star) <= 1e-8
        assert rep.norm_rc <= 1e-10
        assert kkt_residual(prob, rep.x, rep.multiplier) <= 1e-8


class TestThreeBlock:
    def test_d_equal_kf_gives_plain_ls(self):
        prob0 = small_problem(6)
        y = unconstrained(prob0)
        prob = LseProblem(prob0.A, prob0.C, prob0.b, prob0.C @ y)
        assert rel(solve_three_block(prob).x, y) <= 1e-12

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_agrees_with_qr_update(self, seed):
        prob = suite_problem(seed)
        x4 = solve_qr_update(prob).x
        rep = solve_three_block(prob)
        assert rel(rep.x, x4) <= 1e-9
        assert rep.norm_rc <= 1e-10
        assert kkt_residual(prob, rep.x, rep.multiplier) <= 1e-8

    def test_cross_method_agreement(self):
        for seed in range(3, 9):
            prob = suite_problem(seed)
            xs = [solve_lagrange(prob).x, solve_qr_update(prob).x, solve_three_block(prob).x]
            for i in range(3):
                for j in range(i + 1, 3):
                    assert rel(xs[i], xs[j]) <= 1e-8


class TestRegCholesky:
    def test_small_omega_matches_oracle(self):
        prob = suite_problem(9)
        rep = solve_reg_cholesky(prob, omega=1e-10)
        assert rel(rep.x, suite_oracle(9)[0]) <= 1e-6
        assert "y_c" in rep.aux

    def test_multiplier_estimate(self):
        prob = suite_problem(10)
        rep = solve_reg_cholesky(prob, omega=1e-8)
        assert kkt_residual(prob, rep.x, rep.multiplier) <= 1e-8

    def test_constraint_residual_scales_with_omega_squared(self):
        prob = suite_problem(11)
        rc = [solve_reg_cholesky(prob, w).norm_rc for w in (1e-2, 1e-3, 1e-4, 1e-5)]
        for a, b in zip(rc, rc[1:]):
            assert 10 <= a / b <= 1e4

    def test_omega_must_be_positive(self):
        with pytest.raises(ValueError):
            solve_reg_cholesky(small_problem(), 0.0)


class TestWeightedNormal:
    def test_gamma_one_is_stacked_ls(self):
        prob = small_problem(2)
        rep = solve_weighted_normal(prob, 1.0)
        E = np.vstack([prob.A.toarray(), prob.C.toarray()])
        ref, *_ = np.linalg.lstsq(E, np.concatenate([prob.b, prob.d]), rcond=None)
        assert rel(rep.x, ref) <= 1e-10

    def test_large_gamma_drives_constraint_residual(self):
        prob = suite_problem(12)
        rep = solve_weighted_normal(prob, 1e6)
        assert rep.norm_rc <= 1e-6 * np.linalg.norm(prob.d)

    def test_gamma_sweep_approaches_oracle_then_breaks_down(self):
        prob = suite_problem(13)
        x_star = suite_oracle(13)[0]
        errs = []
        for k in range(1, 8):
            errs.append(rel(solve_weighted_normal(prob, 10.0 ** k).x, x_star))
        assert min(errs) <= 1e-5
        with pytest.warns(RuntimeWarning), pytest.raises(NotPositiveDefiniteError):
            solve_weighted_normal(prob, 1e9)

    def test_gamma_below_one(self):
        with pytest.raises(ValueError):
            solve_weighted_normal(small_problem(), 0.5)


class TestDefaultParameters:
    def test_double(self):
        assert regularization_exponent(2, 53) == 8
        omega, gamma = default_parameters()
        assert (omega, gamma) == (1e-8, 1e8)

    def test_single(self):
        assert regularization_exponent(2, 24) == 4

    @pytest.mark.parametrize("digits", [11, 24, 53, 64, 113])
    def test_product_is_one(self, digits):
        omega, gamma = default_parameters(2, digits)
        assert omega * gamma == pytest.approx(1.0, rel=1e-15)
        q = regularization_exponent(2, digits)
        assert 10.0 ** (-2 * q) <= 2.0 ** -digits < 10.0 ** (-2 * (q - 1))


class TestSaddleOperator:
    def test_symmetry_probe(self, rng):
        prob = suite_problem(14)
        op = SaddleOperator(prob.A, prob.C, 1e-4)
        N = prob.n + prob.p
        for _ in range(100):
            u, v = rng.standard_normal(N), rng.standard_normal(N)
            lhs, rhs = op.matvec(u) @ v, u @ op.matvec(v)
            assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), np.linalg.norm(op.matvec(u)) * np.linalg.norm(v))

    def test_matches_dense_block_matrix(self, rng):
        prob = small_problem(1)
        w = 1e-3
        A, C = prob.A.toarray(), prob.C.toarray()
        K = np.block([[-(A.T @ A + w * w * np.eye(prob.n)), C.T], [C, w * w * np.eye(prob.p)]])
        op = SaddleOperator(prob.A, prob.C, w)
        v = rng.standard_normal(prob.n + prob.p)
        np.testing.assert_allclose(op.matvec(v), K @ v, rtol=1e-12, atol=1e-14)
        assert op.H_omega.shape == (prob.n, prob.n)

    def test_omega_positive(self):
        prob = small_problem()
        with pytest.raises(ValueError):
            SaddleOperator(prob.A, prob.C, 0.0)


class TestPreconditioner:
    def test_complete_indefinite_is_exact_inverse(self, rng):
        prob = suite_problem(15)
        op = SaddleOperator(prob.A, prob.C, 1e-3)
        M = build_preconditioner(prob.A, prob.C, 1e-3, "complete", "indefinite")
        assert np.all(np.diag(M.schur_factor) > 0)
        for _ in range(5):
            v = rng.standard_normal(prob.n + prob.p)
            w = op.matvec(M.apply(v))
            assert np.linalg.norm(w - v) <= 1e-10 * np.linalg.norm(v)

    def test_no_constraints(self, rng):
        A = as_csc(rng.standard_normal((15, 5)))
        C = sp.csc_matrix((0, 5))
        op = SaddleOperator(A, C, 1e-2)
        M = build_preconditioner(A, C, 1e-2, "complete", "indefinite")
        v = rng.standard_normal(5)
        # M = -L L^T = -H(omega) exactly, so M^{-1} H v = -v
        np.testing.assert_allclose(M.apply(-op.matvec(v)), -v, rtol=1e-10)
        np.testing.assert_allclose(op.matvec(M.apply(v)), v, rtol=1e-10)

    def test_positive_variant_is_spd(self, rng):
        prob = small_problem(4)
        M = build_preconditioner(prob.A, prob.C, 1e-3, "incomplete", "positive")
        N = prob.n + prob.p
        P = np.column_stack([M.apply(e) for e in np.eye(N)])
        np.testing.assert_allclose(P, P.T, atol=1e-8 * np.abs(P).max())
        assert np.linalg.eigvalsh(0.5 * (P + P.T)).min() > 0

    def test_bad_arguments(self):
        prob = small_problem()
        with pytest.raises(ValueError):
            build_preconditioner(prob.A, prob.C, 1e-3, "exact", "indefinite")
        with pytest.raises(ValueError):
            build_preconditioner(prob.A, prob.C, 1e-3, "complete", "negative")


class TestRegKrylov:
    def test_complete_gmres_converges_fast(self):
        prob = suite_problem(16)
        rep = solve_reg_krylov(prob, 1e-8, "gmres", "complete")
        assert rep.iters <= 3
        assert rel(rep.x, suite_oracle(16)[0]) <= 1e-8

    def test_incomplete_gmres_and_minres(self):
        prob = suite_problem(17)
        g = solve_reg_krylov(prob, 1e-6, "gmres", "incomplete")
        m = solve_reg_krylov(prob, 1e-6, "minres", "incomplete")
        assert m.iters >= g.iters
        for rep in (g, m):
            assert rel(rep.x, suite_oracle(17)[0]) <= 1e-6

    def test_nonconvergence_carries_iterate(self):
        prob = suite_problem(18)
        with pytest.raises(NonConvergenceError) as exc:
            solve_reg_krylov(prob, 1e-6, "gmres", "incomplete", maxit=2)
        assert exc.value.x is not None and len(exc.value.history) == 3

    def test_minres_rejects_indefinite_preconditioner(self):
        prob = small_problem()
        M = build_preconditioner(prob.A, prob.C, 1e-3, "complete", "indefinite")
        with pytest.raises(ValueError):
            solve_reg_krylov(prob, 1e-3, "minres", precond=M)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            solve_reg_krylov(small_problem(), 1e-3, "bicg")

    def test_gmres_iterations_insensitive_to_omega(self):
        prob = suite_problem(19)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            its = [solve_reg_krylov(prob, w, "gmres", "incomplete").iters for w in 10.0 ** -np.arange(2, 10)]
        assert (max(its) - min(its)) / min(its) <= 0.2


class TestMultiplierEstimates:
    @pytest.mark.parametrize("seed", range(6))
    @pytest.mark.parametrize("solve", [solve_lagrange, solve_qr_update, solve_three_block, solve_reg_cholesky,
                                       lambda prob: solve_reg_krylov(prob, method="gmres"),
                                       lambda prob: solve_reg_krylov(prob, method="minres")],
                             ids=["lagrange", "qr-update", "three-block", "reg-cholesky", "reg-gmres", "reg-minres"])
    def test_kkt_residual(self, seed, solve):
        prob = suite_problem(seed)
        rep = solve(prob)
        assert kkt_residual(prob, rep.x, rep.multiplier) <= 1e-8
