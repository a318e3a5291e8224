import functools

import numpy as np
import pytest
import scipy.sparse as sp

from sparse_lse import LseProblem
from sparse_lse.harness import dense_kkt_oracle, generate_random_problem

SUITE_SEEDS = range(50)
SUITE_P = (2, 5, 20)


@functools.lru_cache(maxsize=None)
def suite_problem(seed):
    """Instance ``seed`` of the 50-problem regression suite (m=200, n=100)."""
    return generate_random_problem(200, 100, SUITE_P[seed % 3], density=0.05, cond_target=1e6, seed=seed)


@functools.lru_cache(maxsize=None)
def suite_oracle(seed):
    return dense_kkt_oracle(suite_problem(seed))


def small_problem(seed=0, m=40, n=20, p=3):
    return generate_random_problem(m, n, p, density=0.2, cond_target=1e6, seed=seed)


def rel(a, b):
    return np.linalg.norm(np.asarray(a) - np.asarray(b)) / np.linalg.norm(b)


def unit_problem():
    """``A = I_3``, ``C = e_1^T``, ``b = 0``, ``d = 1``: ``x = e_1``."""
    A = sp.identity(3, format="csc")
    C = sp.csc_matrix(np.array([[1.0, 0.0, 0.0]]))
    return LseProblem(A=A, C=C, b=np.zeros(3), d=np.ones(1))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
