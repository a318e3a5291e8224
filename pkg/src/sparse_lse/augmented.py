"""Augmented-system methods.

* Lagrange-multiplier updating (unconstrained solve, then a ``p x p`` correction)
* QR with updating, and the 3-block augmented variant
* Regularized block signed Cholesky of::

      [ -H(w)  C^T ] [ x   ]   [ -A^T b ]
      [  C     w^2 ] [ y_c ] = [  d     ],   H(w) = A^T A + w^2 I

* the factored block preconditioner for GMRES / MINRES on that system
* plain weighted normal equations, kept for comparison runs
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator

from .errors import NonConvergenceError, NotPositiveDefiniteError, RankDeficientError
from .factor import (
    CholFactor,
    cholesky,
    column_order,
    dense_cho_solve,
    dense_cholesky,
    householder_qr,
    incomplete_cholesky,
    normal_matrix,
)
from .krylov import gmres, minres
from .problem import LseProblem, SolveReport
from .sparse import as_csc

GAMMA_WARN = 1e8


def default_parameters(base: int = 2, digits: int = 53):
    """``omega = 10^-q``, ``gamma = 10^q`` with ``q = min{k : 10^(-2k) <= base^(-digits)}``."""
    return 10.0 ** -regularization_exponent(base, digits), 10.0 ** regularization_exponent(base, digits)


def regularization_exponent(base: int = 2, digits: int = 53) -> int:
    # exact integer comparison: 10^(2k) >= base^digits
    target = base ** digits
    k = 0
    while 10 ** (2 * k) < target:
        k += 1
    return k


def _dense_ct(C) -> np.ndarray:
    return C.T.toarray() if sp.issparse(C) else np.asarray(C).T


# --------------------------------------------------------------------------
# Lagrange multipliers


def solve_lagrange(prob: LseProblem, reg: float = 0.0, route: str = "qr") -> SolveReport:
    """Unconstrained solve, ``H J = -C^T``, ``Y = C J``, ``Y lam = d - C y``,
    ``x = y + J lam``.

    ``route='qr'`` works with ``R`` from a QR of ``A`` (``H = P R^T R P^T``);
    ``route='normal'`` factors ``A^T A + reg^2 I`` by Cholesky.  Either way
    the factor from the unconstrained solve is reused for the ``p`` extra
    right-hand sides.
    """
    A, C, b, d = prob.A, prob.C, prob.b, prob.d
    n = prob.n
    try:
        if route == "qr":
            Aq = as_csc(sp.vstack([A, reg * sp.identity(n)])) if reg > 0 else A
            bq = np.concatenate([b, np.zeros(n)]) if reg > 0 else b
            F = householder_qr(Aq, rhs=bq, order=column_order(A))
            y = F.solve_rpt(F.f)

            def hsolve(V):
                return F.solve_rpt(F.solve_prt(V))
        elif route == "normal":
            chol = cholesky(normal_matrix(A, reg), "fill-reducing")
            y = chol.solve(A.T @ b)
            hsolve = chol.solve
        else:
            raise ValueError(f"unknown route {route!r}")
    except (RankDeficientError, NotPositiveDefiniteError) as exc:
        raise NotPositiveDefiniteError(
            f"normal matrix is not positive definite ({exc}); try reg > 0") from exc
    if prob.p == 0:
        return SolveReport.from_solution(prob, y, "lagrange", route=route, reg=reg,
                                         **{"lambda": np.zeros(0), "y": y})
    J = hsolve(-_dense_ct(C))
    Y = C @ J
    Y = 0.5 * (Y + Y.T)
    # Y is symmetric negative definite
    lam = -dense_cho_solve(dense_cholesky(-Y), d - C @ y)
    x = y + J @ lam
    return SolveReport.from_solution(prob, x, "lagrange", route=route, reg=reg,
                                     **{"lambda": lam, "y": y})


# --------------------------------------------------------------------------
# QR updating and the 3-block variant


def _qr_and_k(prob: LseProblem):
    F = householder_qr(prob.A, rhs=prob.b, order=column_order(prob.A))
    Kt = F.solve_prt(_dense_ct(prob.C))  # K^T, n x p
    return F, Kt


def _min_norm(Kt, rhs):
    """Minimum-norm ``u`` with ``K u = rhs`` through ``(K K^T) w = rhs``."""
    try:
        Lk = dense_cholesky(Kt.T @ Kt)
    except NotPositiveDefiniteError as exc:
        raise RankDeficientError("K K^T is singular: C is not of full row rank") from exc
    w = dense_cho_solve(Lk, rhs)
    return Kt @ w, w


def solve_qr_update(prob: LseProblem) -> SolveReport:
    """QR of ``[AP b]``, unconstrained ``y``, then a minimum-norm correction."""
    F, Kt = _qr_and_k(prob)
    y = F.solve_rpt(F.f)
    if prob.p == 0:
        return SolveReport.from_solution(prob, y, "qr-update", **{"lambda": np.zeros(0)})
    u, w = _min_norm(Kt, prob.d - prob.C @ y)
    z = F.solve_rpt(u)
    x = y + z
    return SolveReport.from_solution(prob, x, "qr-update", g_norm=F.g_norm, **{"lambda": -w})


def solve_three_block(prob: LseProblem) -> SolveReport:
    """Same ``K`` as QR updating; one ``R P^T`` solve on ``f + u`` at the end."""
    F, Kt = _qr_and_k(prob)
    if prob.p == 0:
        return SolveReport.from_solution(prob, F.solve_rpt(F.f), "three-block", **{"lambda": np.zeros(0)})
    u, w = _min_norm(Kt, prob.d - Kt.T @ F.f)
    x = F.solve_rpt(F.f + u)
    return SolveReport.from_solution(prob, x, "three-block", **{"lambda": -w})


# --------------------------------------------------------------------------
# regularized augmented system


def solve_reg_cholesky(prob: LseProblem, omega: float = 1e-8) -> SolveReport:
    """Block signed Cholesky of the regularized 2x2 system.

    ``B`` is never stored: ``B^T = -L^{-1} C^T`` enters only through the
    Schur complement ``S = w^2 I + C L^{-T} L^{-1} C^T`` (built one column
    of ``C^T`` at a time) and through products with vectors.
    """
    if not omega > 0:
        raise ValueError("omega must be positive")
    A, C, b, d = prob.A, prob.C, prob.b, prob.d
    try:
        L = cholesky(normal_matrix(A, omega), "fill-reducing")
    except NotPositiveDefiniteError as exc:
        raise NotPositiveDefiniteError(f"H(omega) factorization broke down; increase omega ({exc})") from exc
    z = L.solve_lower(A.T @ b)
    p = prob.p
    G = np.column_stack([L.solve_lower(col) for col in _dense_ct(C).T]) if p else np.zeros((prob.n, 0))
    S = omega * omega * np.eye(p) + G.T @ G
    Lw = dense_cholesky(S)
    Bz = -(C @ L.solve_upper(z))
    y_c = dense_cho_solve(Lw, d + Bz) if p else np.zeros(0)
    # -B^T y_c = L^{-1} C^T y_c
    x = L.solve_upper(z + L.solve_lower(C.T @ y_c))
    return SolveReport.from_solution(prob, x, "reg-cholesky", omega=omega, y_c=y_c, **{"lambda": -y_c})


def solve_weighted_normal(prob: LseProblem, gamma: float = 1e8) -> SolveReport:
    """Cholesky on ``(A^T A + gamma^2 C^T C) x = A^T b + gamma^2 C^T d``."""
    if gamma < 1:
        raise ValueError("gamma must be >= 1")
    if gamma > GAMMA_WARN:
        warnings.warn("gamma above eps^(-1/2): the weighted normal equations may break down",
                      RuntimeWarning, stacklevel=2)
    Ag = as_csc(sp.vstack([prob.A, gamma * prob.C]))
    rhs = prob.A.T @ prob.b + gamma * gamma * (prob.C.T @ prob.d)
    try:
        chol = cholesky(normal_matrix(Ag), "fill-reducing")
    except NotPositiveDefiniteError as exc:
        raise NotPositiveDefiniteError(f"weighted normal equations broke down at gamma={gamma:g}: {exc}") from exc
    return SolveReport.from_solution(prob, chol.solve(rhs), "weighted-normal", gamma=gamma)


# --------------------------------------------------------------------------
# saddle operator and block preconditioner


class SaddleOperator(LinearOperator):
    """Action of ``[[-H(w), C^T], [C, w^2 I]]`` without forming ``H``."""

    def __init__(self, A, C, omega: float):
        if not omega > 0:
            raise ValueError("omega must be positive")
        self.A = as_csc(A)
        self.C = as_csc(C)
        self.omega = omega
        self.n = self.A.shape[1]
        self.p = self.C.shape[0]
        self._At = as_csc(self.A.T)
        self._Ct = as_csc(self.C.T)
        super().__init__(dtype=np.float64, shape=(self.n + self.p, self.n + self.p))

    @property
    def H_omega(self) -> sp.csc_matrix:
        return normal_matrix(self.A, self.omega)

    def _matvec(self, v):
        v = np.asarray(v).reshape(-1)
        x, yc = v[:self.n], v[self.n:]
        w2 = self.omega * self.omega
        top = -(self._At @ (self.A @ x) + w2 * x) + self._Ct @ yc
        bottom = self.C @ x + w2 * yc
        return np.concatenate([top, bottom])

    def _rmatvec(self, v):
        return self._matvec(v)

    def rhs(self, b, d) -> np.ndarray:
        return np.concatenate([-(self._At @ b), np.asarray(d, dtype=np.float64)])


@dataclass
class BlockPreconditioner:
    """``M = [[L, 0], [B, I]] diag(-I or I, S) [[L^T, B^T], [0, I]]``
    with ``L B^T = -C^T`` and ``S = w^2 I + B B^T``.

    :meth:`apply` returns ``M^{-1} v`` using two triangular solves with
    ``L``, one Schur solve pair and one product with ``C``; ``H^{-1} C^T``
    is precomputed.
    """

    Ltilde: CholFactor
    schur_factor: np.ndarray
    sign: str
    C: sp.csc_matrix
    HinvCt: np.ndarray
    omega: float

    @property
    def n(self) -> int:
        return self.Ltilde.n

    @property
    def p(self) -> int:
        return self.C.shape[0]

    def apply(self, v) -> np.ndarray:
        v = np.asarray(v).reshape(-1)
        w, wc = v[:self.n], v[self.n:]
        u = self.Ltilde.solve(w)
        if self.p:
            y = dense_cho_solve(self.schur_factor, wc + self.C @ u)
            corr = self.HinvCt @ y
        else:
            y = np.zeros(0)
            corr = 0.0
        x = (-u if self.sign == "indefinite" else u) + corr
        return np.concatenate([x, y])

    def as_operator(self) -> LinearOperator:
        N = self.n + self.p
        return LinearOperator((N, N), matvec=self.apply, dtype=np.float64)


def build_preconditioner(A, C, omega: float, quality: str = "incomplete", sign: str = "indefinite",
                         ic_shift: float = 0.0) -> BlockPreconditioner:
    if not omega > 0:
        raise ValueError("omega must be positive")
    if sign not in ("indefinite", "positive"):
        raise ValueError(f"unknown sign {sign!r}")
    A = as_csc(A)
    C = as_csc(C)
    H = normal_matrix(A, omega)
    if quality == "complete":
        L = cholesky(H, "fill-reducing")
    elif quality == "incomplete":
        L = incomplete_cholesky(H, shift=ic_shift)
    else:
        raise ValueError(f"unknown quality {quality!r}")
    p = C.shape[0]
    Ct = _dense_ct(C)
    G = np.column_stack([L.solve_lower(col) for col in Ct.T]) if p else np.zeros((A.shape[1], 0))
    S = omega * omega * np.eye(p) + G.T @ G
    HinvCt = np.column_stack([L.solve_upper(col) for col in G.T]) if p else np.zeros((A.shape[1], 0))
    return BlockPreconditioner(Ltilde=L, schur_factor=dense_cholesky(S), sign=sign, C=C,
                               HinvCt=HinvCt, omega=omega)


def solve_reg_krylov(prob: LseProblem, omega: float = 1e-8, method: str = "gmres",
                     quality: str = "incomplete", tol: float = 1e-11, maxit: int | None = None,
                     precond: BlockPreconditioner | None = None) -> SolveReport:
    """Preconditioned Krylov solve of the regularized saddle system.

    GMRES uses the indefinite preconditioner on the right; MINRES needs and
    gets the positive definite variant.
    """
    if method not in ("gmres", "minres"):
        raise ValueError(f"unknown Krylov method {method!r}")
    sign = "indefinite" if method == "gmres" else "positive"
    if precond is None:
        precond = build_preconditioner(prob.A, prob.C, omega, quality, sign)
    elif precond.sign != sign:
        raise ValueError(f"{method} needs a {sign} preconditioner")
    op = SaddleOperator(prob.A, prob.C, omega)
    rhs = op.rhs(prob.b, prob.d)
    maxit = min(1000, prob.n + prob.p) if maxit is None else maxit
    solver = gmres if method == "gmres" else minres
    sol, trace = solver(op, precond.as_operator(), rhs, tol=tol, maxit=maxit)
    x, y_c = sol[:prob.n], sol[prob.n:]
    tag = f"reg-{method}"
    if not trace.converged:
        raise NonConvergenceError(f"{method} did not reach tol={tol:g} in {trace.iters} iterations",
                                  x=x, history=trace.history)
    return SolveReport.from_solution(prob, x, tag, iters=trace.iters, omega=omega, quality=quality,
                                     y_c=y_c, history=trace.history, **{"lambda": -y_c})
