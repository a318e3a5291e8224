"""Threshold-pivoted Gram-Schmidt QR of a wide matrix.

Both the null-space basis and the direct-elimination pivot search run the
same loop: keep squared column norms ``w``, restrict candidates to
``w_i >= tau * max(w)``, let a rule pick one, orthogonalize the rest
against it and downdate ``w``.  Only the picking rule differs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import RankDeficientError

RANK_TOL = 1e-12


@dataclass
class WideQr:
    """``C[:, pivots] = Q @ R`` (``Q`` is ``p x p`` orthogonal, ``R`` upper)."""

    pivots: np.ndarray
    Q: np.ndarray
    R: np.ndarray

    def solve(self, rhs) -> np.ndarray:
        """Apply ``C1^{-1}`` where ``C1 = C[:, pivots]``."""
        return sla.solve_triangular(self.R, self.Q.T @ rhs, lower=False, check_finite=False)

    def cond(self) -> float:
        if self.R.size == 0:
            return 1.0
        return float(np.linalg.cond(self.R))


def threshold_pivoted_gs(Cd: np.ndarray, tau: float, choose, rank_tol: float = RANK_TOL):
    """Run ``p`` pivoted Gram-Schmidt steps on the dense ``p x n`` array ``Cd``.

    ``choose(candidates, step)`` receives the ascending candidate column
    indices of the threshold set and returns the chosen one.  Norms are
    downdated with ``w_j -= (q^T c_j)^2`` and clamped at zero; a value that
    lost eight digits to cancellation is recomputed from the column.
    """
    if not 0.0 < tau <= 1.0:
        raise ValueError("threshold parameter must lie in (0, 1]")
    c = np.array(Cd, dtype=np.float64, copy=True)
    p, n = c.shape
    w = np.sum(c * c, axis=0)
    w_ref = w.copy()
    floor = (rank_tol * np.sqrt(w.max())) ** 2 if n and w.max() > 0 else 0.0
    avail = np.ones(n, dtype=bool)
    pivots = []
    Q = np.zeros((p, p))
    T = np.zeros((p, n))
    for step in range(p):
        wa = np.where(avail, w, -np.inf)
        imax = int(np.argmax(wa))
        wmax = wa[imax]
        if not wmax > floor:
            raise RankDeficientError(f"no acceptable pivot at step {step}: rank deficient", index=step)
        cand = np.flatnonzero(avail & (w >= tau * wmax))
        il = int(choose(cand, step))
        norm = np.linalg.norm(c[:, il])
        q = c[:, il] / norm
        # one reorthogonalization pass against earlier directions
        if step:
            q -= Q[:, :step] @ (Q[:, :step].T @ q)
            q /= np.linalg.norm(q)
        avail[il] = False
        rest = np.flatnonzero(avail)
        coef = q @ c[:, rest]
        c[:, rest] -= np.outer(q, coef)
        c[:, il] = 0.0
        w[rest] = np.maximum(w[rest] - coef * coef, 0.0)
        stale = rest[w[rest] <= 1e-8 * w_ref[rest]]
        if stale.size:
            w[stale] = np.sum(c[:, stale] ** 2, axis=0)
            w_ref[stale] = w[stale]
        w[il] = 0.0
        Q[:, step] = q
        T[step, il] = norm
        T[step, rest] = coef
        pivots.append(il)
    pivots = np.asarray(pivots, dtype=np.int64)
    # R taken from the original columns keeps C1 = Q R backward stable
    R = np.triu(Q.T @ np.asarray(Cd, dtype=np.float64)[:, pivots])
    return WideQr(pivots=pivots, Q=Q, R=R), T
