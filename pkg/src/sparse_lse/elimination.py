"""Direct elimination.

Pick ``p`` pivot columns of ``C`` with a threshold-pivoted QR that prefers
columns whose ``A``-column adds the fewest new rows to the *Occupied* set,
substitute ``y1 = C1^{-1}(d - C2 y2)`` and solve the resulting sparse-dense
least-squares problem in ``y2``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import NonConvergenceError, NotPositiveDefiniteError
from .factor import cholesky, dense_cho_solve, dense_cholesky, normal_matrix
from .krylov import as_operator, pcg
from .pivoting import WideQr, threshold_pivoted_gs
from .problem import LseProblem, SolveReport
from .sparse import as_csc, detect_dense_rows, split_rows

log = logging.getLogger(__name__)

COND_WARN = 1e10
# shift for a rank-deficient sparse part: eps^(1/4) balances the
# perturbation (shift^2) against cancellation in the Schur update (eps/shift^2)
SHIFT_FACTOR = float(np.finfo(np.float64).eps) ** 0.25


@dataclass
class PivotOutcome:
    S: np.ndarray          # pivot columns in selection order
    P_c: np.ndarray        # S followed by the remaining columns, ascending
    occupied: np.ndarray   # sorted row indices of A touched by the pivot columns
    tau: float
    c1: WideQr

    @property
    def rest(self) -> np.ndarray:
        return self.P_c[len(self.S):]


def _row_sets(A: sp.csc_matrix):
    return [A.indices[A.indptr[j]:A.indptr[j + 1]] for j in range(A.shape[1])]


def select_pivots(C, A, tau: float = 1.0) -> PivotOutcome:
    """Threshold-pivoted QR of ``C`` steered by the sparsity of ``A``.

    At each step the candidates are the unselected columns with
    ``w_i >= tau * max w``; the one adding the fewest rows of ``A`` to the
    Occupied set wins, ties to the smallest column index.
    """
    C = as_csc(C)
    A = as_csc(A)
    m, n = A.shape
    rows_of = _row_sets(A)
    occ = np.zeros(m, dtype=bool)

    def choose(cand, step):
        new = np.array([np.count_nonzero(~occ[rows_of[k]]) for k in cand])
        pick = int(cand[np.argmin(new)])  # argmin returns the first, i.e. smallest index
        occ[rows_of[pick]] = True
        return pick

    c1, _ = threshold_pivoted_gs(C.toarray(), tau, choose)
    S = c1.pivots
    rest = np.setdiff1d(np.arange(n), S)
    if C.shape[0]:
        cond = c1.cond()
        if cond > COND_WARN:
            warnings.warn(f"C1 is badly conditioned (cond ~ {cond:.2e}); consider a larger tau",
                          RuntimeWarning, stacklevel=2)
    return PivotOutcome(S=S, P_c=np.concatenate([S, rest]), occupied=np.flatnonzero(occ), tau=tau, c1=c1)


def occupied_rows(A, S) -> np.ndarray:
    """Rows of ``A`` with a nonzero in any column of ``S`` (recomputed)."""
    A = as_csc(A)
    if len(S) == 0:
        return np.empty(0, dtype=np.int64)
    return np.unique(as_csc(A[:, np.asarray(S)]).indices)


@dataclass
class TransformedLs:
    A_T: sp.csc_matrix
    rhs: np.ndarray
    dense_rows: np.ndarray
    W: np.ndarray           # C1^{-1} C2, dense p x (n - p)
    piv: PivotOutcome
    C2: sp.csc_matrix

    def recover(self, y2, d) -> np.ndarray:
        """Assemble ``x = P_c (y1, y2)`` with ``y1 = C1^{-1}(d - C2 y2)``."""
        piv = self.piv
        y1 = piv.c1.solve(np.asarray(d) - self.C2 @ y2) if len(piv.S) else np.empty(0)
        x = np.empty(len(piv.P_c))
        x[piv.S] = y1
        x[piv.rest] = y2
        return x


def transform(A, C, piv: PivotOutcome, d, b, density: float = 0.05) -> TransformedLs:
    """Form ``A_T = A2 - A1 C1^{-1} C2`` and ``b - A1 C1^{-1} d``.

    Only the Occupied rows of ``A2`` change.  Exact zeros are pruned, nothing
    else is dropped.  Dense rows are searched among the Occupied rows.
    """
    A = as_csc(A)
    C = as_csc(C)
    S, rest = piv.S, piv.rest
    A1 = as_csc(A[:, S])
    A2 = as_csc(A[:, rest])
    C2 = as_csc(C[:, rest])
    b = np.asarray(b, dtype=np.float64)
    if len(S) == 0:
        return TransformedLs(A_T=A2, rhs=b.copy(), dense_rows=np.empty(0, dtype=np.int64),
                             W=np.zeros((0, len(rest))), piv=piv, C2=C2)
    W = piv.c1.solve(C2.toarray())
    occ = piv.occupied
    block = A1[occ].toarray() @ W
    ii, jj = np.nonzero(block)
    update = sp.csc_matrix((block[ii, jj], (occ[ii], jj)), shape=A2.shape)
    A_T = as_csc(A2 - update)
    rhs = b - A1 @ piv.c1.solve(np.asarray(d, dtype=np.float64))
    if occ.size:
        sub, _ = split_rows(A_T, np.setdiff1d(np.arange(A_T.shape[0]), occ))
        dense_rows = occ[np.sort(detect_dense_rows(sub, density))]
    else:
        dense_rows = np.empty(0, dtype=np.int64)
    return TransformedLs(A_T=A_T, rhs=rhs, dense_rows=dense_rows, W=W, piv=piv, C2=C2)


def rows_gaining_entries(A2, A_T) -> np.ndarray:
    """Rows of ``A_T`` holding an entry outside the pattern of ``A2``."""
    P2 = as_csc(A2).astype(bool).astype(np.int8)
    PT = as_csc(A_T).astype(bool).astype(np.int8)
    extra = (PT - PT.multiply(P2)).tocsr()
    extra.eliminate_zeros()
    return np.flatnonzero(np.diff(extra.indptr))


class SparseDensePreconditioner:
    """Preconditioner for ``A_T^T A_T`` built from the sparse rows ``A_s``.

    ``H_s = A_s^T A_s (+ shift^2 I)`` is factored by sparse Cholesky.  With
    ``dense_update`` the dense rows ``A_d`` are folded back in through the
    ``ndense x ndense`` Schur complement ``I + A_d H_s^{-1} A_d^T``, which
    makes the preconditioner the exact inverse of ``H_s + A_d^T A_d``.
    """

    def __init__(self, A_T, dense_rows, dense_update: bool = True):
        sparse_part, dense_part = split_rows(A_T, dense_rows)
        self.shift = 0.0
        try:
            self.chol = cholesky(normal_matrix(sparse_part), "fill-reducing")
        except NotPositiveDefiniteError:
            # dropping the dense rows can leave null or dependent columns
            self.shift = SHIFT_FACTOR * max(1.0, float(np.abs(A_T.data).max()))
            log.info("sparse part is rank deficient; shifting its normal matrix by %.1e^2", self.shift)
            self.chol = cholesky(normal_matrix(sparse_part, self.shift), "fill-reducing")
        self.dense_update = bool(dense_update and dense_part.shape[0])
        if self.dense_update:
            Ad = dense_part.toarray()
            self.HinvAdT = np.column_stack([self.chol.solve(r) for r in Ad])
            self.Ad = Ad
            self.schur = dense_cholesky(np.eye(Ad.shape[0]) + Ad @ self.HinvAdT)

    def __call__(self, v):
        u = self.chol.solve(v)
        if self.dense_update:
            u = u - self.HinvAdT @ dense_cho_solve(self.schur, self.Ad @ u)
        return u


def solve_direct_elim(prob: LseProblem, tau: float = 1.0, tol: float = 1e-11,
                      density: float = 0.05, maxit: int | None = None,
                      stagnation: int = 50, dense_update: bool = True) -> SolveReport:
    """Direct elimination with a sparse-dense PCG solve of the reduced problem.

    The preconditioner starts from the Cholesky factor of the normal matrix
    of the sparse rows of ``A_T``; ``dense_update=False`` uses that factor
    alone, otherwise the dense rows are added back by a Schur complement
    update (see :class:`SparseDensePreconditioner`).  The operator always
    uses all of ``A_T``.  Stops on ``||A_T^T r|| / ||r|| <= tol``.
    """
    piv = select_pivots(prob.C, prob.A, tau)
    tls = transform(prob.A, prob.C, piv, prob.d, prob.b, density=density)
    A_T, rhs = tls.A_T, tls.rhs
    k = A_T.shape[1]
    precond = SparseDensePreconditioner(A_T, tls.dense_rows, dense_update)
    A_Tt = as_csc(A_T.T)

    def normal_op(v):
        return A_Tt @ (A_T @ v)

    def ls_residual(y):
        return float(np.linalg.norm(rhs - A_T @ y))

    op = as_operator(normal_op, k)
    y2, trace = pcg(op, precond, A_Tt @ rhs, tol=tol, maxit=maxit or max(10 * k, 100),
                    stop="ls-gradient", ls_residual=ls_residual, stagnation=stagnation)
    x = tls.recover(y2, prob.d)
    if not trace.converged:
        raise NonConvergenceError(
            f"CG on the transformed problem stopped after {trace.iters} iterations "
            f"(best ratio {min(trace.history):.2e})", x=x, history=trace.history)
    return SolveReport.from_solution(
        prob, x, "direct-elim", iters=trace.iters,
        tau=tau, ndense=int(tls.dense_rows.size), occupied=int(piv.occupied.size),
        pivots=piv.S.tolist(), precond_shift=precond.shift, dense_update=precond.dense_update,
        cond_c1=piv.c1.cond() if len(piv.S) else 1.0,
    )
