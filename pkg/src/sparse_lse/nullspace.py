"""Null-space method: ``x = x1 + Z x2`` with ``C Z = 0`` and ``C x1 = d``.

The basis is the fundamental one, ``Z = P_c [-C1^{-1} C2; I]``, where the
``p`` columns forming ``C1`` come from a threshold-pivoted QR of ``C``.
Among the columns whose norm is within ``theta`` of the largest, the one
closest (in current position) to the pivot slot is taken, so interchanges
stay local.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, NonConvergenceError
from .factor import (
    cholesky,
    householder_qr,
    incomplete_cholesky,
    minimum_degree_order,
    symbolic_cholesky,
)
from .krylov import pcg
from .pivoting import WideQr, threshold_pivoted_gs
from .problem import LseProblem, SolveReport
from .sparse import as_csc

log = logging.getLogger(__name__)


@dataclass
class NullBasis:
    Z: sp.csc_matrix
    theta: float
    pivot_cols: np.ndarray  # columns of C forming C1, then the rest ascending
    c1: WideQr

    @property
    def ncols(self) -> int:
        return self.Z.shape[1]


def _locality_rule(n):
    position = np.arange(n)  # position[col] = slot the column currently occupies
    slot_owner = np.arange(n)

    def choose(cand, step):
        dist = position[cand] - step
        pick = int(cand[np.argmin(dist)])
        # interchange the chosen column with whatever sits in slot 'step'
        other = slot_owner[step]
        pos = position[pick]
        slot_owner[step], slot_owner[pos] = pick, other
        position[pick], position[other] = step, pos
        return pick

    return choose


def nullspace_basis(C, theta: float = 1.0) -> NullBasis:
    """Sparse null-space basis of the wide full-row-rank matrix ``C``.

    Smaller ``theta`` admits more candidate pivots (more locality, sparser
    ``Z``) at the cost of a worse conditioned ``C1``.
    """
    C = as_csc(C)
    p, n = C.shape
    if p >= n:
        raise DimensionError(f"C must be wide, got {p}x{n}")
    Cd = C.toarray()
    c1, _ = threshold_pivoted_gs(Cd, theta, _locality_rule(n))
    S = c1.pivots
    rest = np.setdiff1d(np.arange(n), S)
    W = c1.solve(Cd[:, rest]) if p else np.zeros((0, n))
    k = n - p
    # rows S of Z hold -W, rows 'rest' hold the identity
    Wc = sp.csc_matrix(-W)
    Wc.eliminate_zeros()
    top = sp.csc_matrix((Wc.data, S[Wc.indices], Wc.indptr), shape=(n, k))
    eye = sp.csc_matrix((np.ones(k), rest, np.arange(k + 1)), shape=(n, k))
    Z = as_csc(top + eye)
    return NullBasis(Z=Z, theta=theta, pivot_cols=np.concatenate([S, rest]), c1=c1)


def particular_solution(C, d) -> np.ndarray:
    """Minimum-norm solution of ``C x = d`` via a Householder QR of ``C^T``."""
    C = as_csc(C)
    d = np.asarray(d, dtype=np.float64)
    p, n = C.shape
    if d.shape != (p,):
        raise DimensionError("d must have one entry per row of C")
    if p == 0:
        return np.zeros(n)
    F = householder_qr(C.T, pivoting="column-norm")
    # C^T P = Q1 R  =>  R^T Q1^T x = P^T d
    u = F.tri.solve(d[F.colperm], transpose=True)
    return F.apply_q(np.concatenate([u, np.zeros(n - p)]))


def reduced_system(prob: LseProblem, basis: NullBasis, x1):
    """Return ``(A Z, Z^T H Z, (AZ)^T (b - A x1))``; ``H`` is never formed."""
    AZ = as_csc(prob.A @ basis.Z)
    G = as_csc(AZ.T @ AZ)
    rhs = AZ.T @ (prob.b - prob.A @ x1)
    return AZ, G, rhs


def solve_nullspace(prob: LseProblem, theta: float = 1.0, inner: str = "cholesky",
                    tol: float = 1e-12, maxit: int | None = None,
                    max_factor_nnz: int | None = None) -> SolveReport:
    """Null-space method.

    ``inner='cholesky'`` factors ``Z^T H Z`` directly (fill-reducing order);
    if ``max_factor_nnz`` is set and the symbolic factor would exceed it,
    the solve falls back to PCG with an incomplete Cholesky preconditioner.
    ``inner='pcg'`` forces the iterative route.
    """
    if inner not in ("cholesky", "pcg"):
        raise ValueError(f"unknown inner solver {inner!r}")
    x1 = particular_solution(prob.C, prob.d)
    basis = nullspace_basis(prob.C, theta)
    AZ, G, rhs = reduced_system(prob, basis, x1)
    k = G.shape[0]
    used = inner
    iters = 0
    if inner == "cholesky" and max_factor_nnz is not None:
        _, counts = symbolic_cholesky(G, minimum_degree_order(G))
        if counts.sum() > max_factor_nnz:
            log.info("reduced factor needs %d entries, over the cap; using PCG", counts.sum())
            used = "pcg"
    if used == "cholesky":
        x2 = cholesky(G, "fill-reducing").solve(rhs)
    else:
        ic = incomplete_cholesky(G)
        x2, trace = pcg(G, ic.solve, rhs, tol=tol, maxit=maxit or 10 * k)
        iters = trace.iters
        if not trace.converged:
            x = x1 + basis.Z @ x2
            raise NonConvergenceError(f"PCG on the reduced system stopped after {iters} iterations",
                                      x=x, history=trace.history)
    x = x1 + basis.Z @ x2
    nnz_g = G.nnz
    return SolveReport.from_solution(
        prob, x, "nullspace", iters=iters,
        theta=theta, inner=used, nnz_reduced=int(nnz_g),
        density=nnz_g / float(k * k) if k else 0.0, nnz_Z=int(basis.Z.nnz),
        reduced_gradient=float(np.linalg.norm(AZ.T @ (prob.b - prob.A @ x))),
        reduced_rhs_norm=float(np.linalg.norm(AZ.T @ prob.b)),
    )
