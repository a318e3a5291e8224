"""Krylov solvers: preconditioned CG, unrestarted GMRES, preconditioned MINRES.

Operators are anything :func:`scipy.sparse.linalg.aslinearoperator` accepts,
or a plain callable.  Preconditioner arguments always apply the *inverse*
``M^{-1}``; ``None`` means the identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, aslinearoperator

from .errors import NotPositiveDefiniteError

BREAKDOWN_TOL = 1e-14


@dataclass
class IterationTrace:
    """Residual history (``iters + 1`` entries, starting with the initial
    residual), convergence flag and iteration count."""

    history: list = field(default_factory=list)
    converged: bool = False
    iters: int = 0

    @property
    def final(self) -> float:
        return self.history[-1]


def as_operator(op, n: int | None = None) -> LinearOperator:
    if op is None:
        if n is None:
            raise ValueError("dimension needed for an identity operator")
        return LinearOperator((n, n), matvec=lambda v: v, dtype=np.float64)
    if callable(op) and not hasattr(op, "shape"):
        if n is None:
            raise ValueError("dimension needed to wrap a callable")
        return LinearOperator((n, n), matvec=op, dtype=np.float64)
    return aslinearoperator(op)


def pcg(op, precond, rhs, tol: float = 1e-10, maxit: int | None = None,
        stop: str = "relative-residual", ls_residual=None, stagnation: int | None = None):
    """Preconditioned conjugate gradients for SPD ``op``.

    ``stop='relative-residual'`` stops on ``||b - op x|| <= tol ||b||``.
    ``stop='ls-gradient'`` treats ``op`` as ``A^T A`` for some least-squares
    matrix: ``ls_residual(x)`` must return ``||b_ls - A x||`` and the test is
    ``||A^T r|| / ||r|| <= tol`` (history then stores that ratio).

    With ``stagnation=k`` the run stops early once the best measure has not
    improved for ``k`` iterations.  Returns ``(x, trace)`` where ``x`` is the
    best iterate seen.
    """
    b = np.asarray(rhs, dtype=np.float64)
    n = b.shape[0]
    A = as_operator(op, n)
    M = as_operator(precond, n)
    if stop not in ("relative-residual", "ls-gradient"):
        raise ValueError(f"unknown stop rule {stop!r}")
    if stop == "ls-gradient" and ls_residual is None:
        raise ValueError("ls-gradient stopping needs ls_residual")
    maxit = 10 * n if maxit is None else maxit

    def measure(x, r):
        if stop == "ls-gradient":
            rn = ls_residual(x)
            return np.linalg.norm(r) / rn if rn > 0 else 0.0
        return np.linalg.norm(r)

    x = np.zeros(n)
    r = b.copy()
    bnorm = np.linalg.norm(b)
    target = tol if stop == "ls-gradient" else tol * bnorm
    trace = IterationTrace(history=[measure(x, r)])
    if trace.history[0] <= target or bnorm == 0.0:
        trace.converged = True
        return x, trace
    best, best_x, since = trace.history[0], x.copy(), 0
    z = M.matvec(r)
    p = z.copy()
    rz = r @ z
    for k in range(1, maxit + 1):
        q = A.matvec(p)
        pq = p @ q
        if pq <= 0:
            raise NotPositiveDefiniteError(f"p^T A p = {pq:.3e} <= 0 at iteration {k}")
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        val = measure(x, r)
        trace.history.append(val)
        trace.iters = k
        if val < best:
            best, best_x, since = val, x.copy(), 0
        else:
            since += 1
        if val <= target:
            trace.converged = True
            return x, trace
        if stagnation is not None and since >= stagnation:
            break
        z = M.matvec(r)
        rz_new = r @ z
        if rz_new < 0:
            raise NotPositiveDefiniteError("preconditioner is not positive definite")
        p = z + (rz_new / rz) * p
        rz = rz_new
    return best_x, trace


def gmres(op, right_precond, rhs, tol: float = 1e-11, maxit: int | None = None):
    """Unrestarted right-preconditioned GMRES with full reorthogonalization.

    Solves ``op M^{-1} w = b`` and returns ``x = M^{-1} w``.  Convergence is
    ``||b - op x|| <= tol ||b||`` as estimated by the Arnoldi recurrence.
    """
    b = np.asarray(rhs, dtype=np.float64)
    n = b.shape[0]
    A = as_operator(op, n)
    M = as_operator(right_precond, n)
    maxit = min(1000, n) if maxit is None else maxit
    beta = np.linalg.norm(b)
    trace = IterationTrace(history=[beta])
    if beta == 0.0:
        trace.converged = True
        return np.zeros(n), trace
    V = np.zeros((n, maxit + 1))
    Hh = np.zeros((maxit + 1, maxit))
    cs = np.zeros(maxit)
    sn = np.zeros(maxit)
    g = np.zeros(maxit + 1)
    g[0] = beta
    V[:, 0] = b / beta
    k = 0
    for k in range(1, maxit + 1):
        j = k - 1
        w = A.matvec(M.matvec(V[:, j]))
        wnorm = np.linalg.norm(w)
        # two classical Gram-Schmidt passes
        for _ in range(2):
            h = V[:, :k].T @ w
            w -= V[:, :k] @ h
            Hh[:k, j] += h
        hnext = np.linalg.norm(w)
        Hh[k, j] = hnext
        for i in range(j):
            t = cs[i] * Hh[i, j] + sn[i] * Hh[i + 1, j]
            Hh[i + 1, j] = -sn[i] * Hh[i, j] + cs[i] * Hh[i + 1, j]
            Hh[i, j] = t
        denom = np.hypot(Hh[j, j], Hh[k, j])
        cs[j], sn[j] = (1.0, 0.0) if denom == 0 else (Hh[j, j] / denom, Hh[k, j] / denom)
        Hh[j, j] = denom
        Hh[k, j] = 0.0
        g[k] = -sn[j] * g[j]
        g[j] = cs[j] * g[j]
        trace.history.append(abs(g[k]))
        trace.iters = k
        happy = hnext <= BREAKDOWN_TOL * max(wnorm, 1.0)
        if abs(g[k]) <= tol * beta or happy:
            trace.converged = True
            break
        V[:, k] = w / hnext
    y = _back_substitute(Hh[:k, :k], g[:k])
    x = M.matvec(V[:, :k] @ y)
    return x, trace


def _back_substitute(U, g):
    k = U.shape[0]
    y = np.zeros(k)
    for i in range(k - 1, -1, -1):
        y[i] = (g[i] - U[i, i + 1:] @ y[i + 1:]) / U[i, i] if U[i, i] != 0 else 0.0
    return y


def minres(op, spd_precond, rhs, tol: float = 1e-11, maxit: int | None = None):
    """Preconditioned MINRES for symmetric ``op`` and SPD preconditioner.

    Keeps a fixed handful of work vectors.  History holds the residual in the
    ``M^{-1}`` norm; convergence is that quantity relative to its start.
    """
    b = np.asarray(rhs, dtype=np.float64)
    n = b.shape[0]
    A = as_operator(op, n)
    M = as_operator(spd_precond, n)
    maxit = 5 * n if maxit is None else maxit
    eps = np.finfo(float).eps
    x = np.zeros(n)
    r1 = b.copy()
    y = M.matvec(r1)
    beta1 = r1 @ y
    if beta1 < 0:
        raise NotPositiveDefiniteError("preconditioner is not positive definite")
    beta1 = np.sqrt(beta1)
    trace = IterationTrace(history=[beta1])
    if beta1 == 0.0:
        trace.converged = True
        return x, trace
    oldb, beta, dbar, epsln = 0.0, beta1, 0.0, 0.0
    phibar, cs, sn = beta1, -1.0, 0.0
    w = np.zeros(n)
    w2 = np.zeros(n)
    r2 = r1.copy()
    for k in range(1, maxit + 1):
        v = y / beta
        y = A.matvec(v)
        if k >= 2:
            y = y - (beta / oldb) * r1
        alfa = v @ y
        y = y - (alfa / beta) * r2
        r1, r2 = r2, y
        y = M.matvec(r2)
        oldb = beta
        beta = r2 @ y
        if beta < -BREAKDOWN_TOL * oldb * oldb:
            raise NotPositiveDefiniteError("preconditioner is not positive definite")
        beta = np.sqrt(max(beta, 0.0))
        oldeps = epsln
        delta = cs * dbar + sn * alfa
        gbar = sn * dbar - cs * alfa
        epsln = sn * beta
        dbar = -cs * beta
        gamma = max(np.hypot(gbar, beta), eps)
        cs, sn = gbar / gamma, beta / gamma
        phi = cs * phibar
        phibar = sn * phibar
        w1, w2 = w2, w
        w = (v - oldeps * w1 - delta * w2) / gamma
        x = x + phi * w
        trace.history.append(abs(phibar))
        trace.iters = k
        if abs(phibar) <= tol * beta1 or beta <= BREAKDOWN_TOL * oldb:
            trace.converged = True
            break
    return x, trace
