import numpy as np
import pytest
import scipy.sparse as sp
from scipy.sparse.linalg import norm as spnorm

from conftest import rel, small_problem, suite_oracle, suite_problem
from sparse_lse import LseProblem
from sparse_lse.errors import DimensionError, RankDeficientError
from sparse_lse.harness import dense_kkt_oracle
from sparse_lse.nullspace import nullspace_basis, particular_solution, solve_nullspace
from sparse_lse.sparse import as_csc


class TestBasis:
    def test_unit_row(self):
        B = nullspace_basis(as_csc(np.array([[1.0, 0.0, 0.0]])))
        Z = B.Z.toarray()
        assert Z.shape == (3, 2)
        np.testing.assert_array_equal(np.array([[1.0, 0.0, 0.0]]) @ Z, 0.0)
        assert np.linalg.matrix_rank(Z[1:]) == 2

    def test_sum_row(self):
        Z = nullspace_basis(as_csc(np.array([[1.0, 1.0]]))).Z.toarray()[:, 0]
        np.testing.assert_allclose(Z / Z[1], [-1.0, 1.0])

    @pytest.mark.parametrize("theta", [1.0, 0.5, 0.1])
    def test_random_wide(self, rng, theta):
        C = sp.random(5, 40, density=0.4, random_state=rng, format="csc", data_rvs=rng.standard_normal)
        B = nullspace_basis(C, theta)
        Z = B.Z.toarray()
        assert np.linalg.norm(C @ Z) <= 1e-12 * spnorm(C) * np.linalg.norm(Z)
        assert np.linalg.matrix_rank(Z) == 35
        v = rng.standard_normal((35, 20))
        ratios = np.linalg.norm(C @ (Z @ v), axis=0) / np.linalg.norm(Z @ v, axis=0)
        assert ratios.max() <= 1e-10 * spnorm(C)

    def test_locality_keeps_identity_block_in_place(self):
        # every column qualifies at theta=1e-3; locality picks the leading ones
        C = as_csc(np.array([[1.0, 0.0, 0.9, 0.0], [0.0, 1.0, 0.0, 0.9]]))
        B = nullspace_basis(C, theta=1e-3)
        np.testing.assert_array_equal(np.sort(B.pivot_cols[:2]), [0, 1])

    def test_rank_deficient(self):
        C = as_csc(np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]]))
        with pytest.raises(RankDeficientError) as exc:
            nullspace_basis(C)
        assert exc.value.index == 1

    def test_square_rejected(self):
        with pytest.raises(DimensionError):
            nullspace_basis(sp.identity(3, format="csc"))


class TestParticularSolution:
    def test_identity_padded(self):
        C = as_csc(np.hstack([np.eye(2), np.zeros((2, 3))]))
        np.testing.assert_allclose(particular_solution(C, np.array([3.0, -1.0])), [3, -1, 0, 0, 0], atol=1e-15)

    def test_line(self):
        np.testing.assert_allclose(particular_solution(as_csc(np.array([[3.0, 4.0]])), np.array([5.0])),
                                   [0.6, 0.8], rtol=1e-15)

    def test_against_pseudo_inverse(self, rng):
        C = rng.standard_normal((6, 25))
        d = rng.standard_normal(6)
        x1 = particular_solution(as_csc(C), d)
        ref = np.linalg.pinv(C) @ d
        assert rel(x1, ref) <= 1e-10
        assert np.linalg.norm(C @ x1 - d) <= 1e-12 * (np.linalg.norm(C) * np.linalg.norm(x1) + np.linalg.norm(d))


class TestSolve:
    def test_separable_problem(self):
        n, p = 6, 2
        a = np.arange(1.0, n + 1)
        A = sp.diags(a, format="csc")
        C = as_csc(np.eye(n)[:p])
        b = np.ones(n)
        d = np.array([2.0, -1.0])
        prob = LseProblem(A, C, b, d)
        x = solve_nullspace(prob).x
        expect = np.concatenate([d, 1.0 / a[p:]])
        np.testing.assert_allclose(x, expect, rtol=1e-10)
        np.testing.assert_allclose(dense_kkt_oracle(prob)[0], expect, rtol=1e-10)

    @pytest.mark.parametrize("inner", ["cholesky", "pcg"])
    def test_random_against_oracle(self, inner):
        prob = suite_problem(1)
        x_star, _ = suite_oracle(1)
        rep = solve_nullspace(prob, inner=inner)
        assert rel(rep.x, x_star) <= 1e-8
        assert rep.aux["inner"] == inner
        assert 0 < rep.aux["density"] <= 1

    def test_memory_cap_switches_to_pcg(self):
        rep = solve_nullspace(small_problem(3), max_factor_nnz=1)
        assert rep.aux["inner"] == "pcg"

    def test_reduced_gradient(self):
        prob = suite_problem(4)
        for theta in (1.0, 0.1):
            rep = solve_nullspace(prob, theta=theta)
            assert rep.aux["reduced_gradient"] <= 1e-9 * rep.aux["reduced_rhs_norm"]

    def test_unknown_inner(self):
        with pytest.raises(ValueError):
            solve_nullspace(small_problem(), inner="lu")
