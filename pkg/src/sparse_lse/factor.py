"""Householder QR, sparse Cholesky, zero-fill incomplete Cholesky and
triangular solves.

Conventions
-----------
``QrFactor``: ``M[:, colperm] = Q @ [[R], [0]]``.
``CholFactor``: ``H[perm][:, perm] = L @ L.T``, i.e. ``H = P^T L L^T P`` with
``(P x) = x[perm]``.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import (
    BreakdownError,
    DimensionError,
    NotPositiveDefiniteError,
    RankDeficientError,
    SingularFactorError,
)
from .sparse import as_csc, inverse_permutation, symmetric_from_lower

RANK_TOL = 1e-12
# dense work arrays above this many bytes are refused
DENSE_BYTES_LIMIT = 2 * 1024**3
# triangular factors at least this dense (and small enough) are solved with LAPACK
_DENSE_SOLVE_FILL = 0.2
_DENSE_SOLVE_MAXN = 3000


# --------------------------------------------------------------------------
# triangular solves


class Triangular:
    """A sparse triangular matrix with solve capability.

    Column-oriented substitution on the CSC arrays; when the factor is small
    and dense enough a cached dense copy is handed to LAPACK instead.
    """

    def __init__(self, T, lower: bool):
        self.T = as_csc(T)
        self.lower = lower
        n = self.T.shape[0]
        if self.T.shape != (n, n):
            raise DimensionError("triangular factor must be square")
        self.n = n
        diag = self.T.diagonal()
        if np.any(diag == 0):
            raise SingularFactorError(
                f"zero on the diagonal at position {int(np.flatnonzero(diag == 0)[0])}"
            )
        self.diag = diag
        fill = self.T.nnz / max(1, n * (n + 1) // 2)
        self._dense = self.T.toarray() if (n <= _DENSE_SOLVE_MAXN and fill >= _DENSE_SOLVE_FILL) else None

    def solve(self, rhs, transpose: bool = False) -> np.ndarray:
        b = np.array(rhs, dtype=np.float64, copy=True)
        if b.shape[0] != self.n:
            raise DimensionError(f"rhs has {b.shape[0]} rows, factor is {self.n}x{self.n}")
        if self.n == 0:
            return b
        if self._dense is not None:
            return sla.solve_triangular(self._dense, b, lower=self.lower, trans=1 if transpose else 0,
                                        check_finite=False)
        ptr, idx, val = self.T.indptr, self.T.indices, self.T.data
        multi = b.ndim == 2
        # effective orientation: T^T of a lower factor behaves like an upper one
        forward = self.lower != transpose
        cols = range(self.n) if forward else range(self.n - 1, -1, -1)
        if not transpose:
            for j in cols:
                lo, hi = ptr[j], ptr[j + 1]
                rows, vals = idx[lo:hi], val[lo:hi]
                b[j] /= self.diag[j]
                off = rows != j
                if multi:
                    b[rows[off]] -= np.outer(vals[off], b[j])
                else:
                    b[rows[off]] -= vals[off] * b[j]
        else:
            for j in cols:
                lo, hi = ptr[j], ptr[j + 1]
                rows, vals = idx[lo:hi], val[lo:hi]
                off = rows != j
                b[j] = (b[j] - vals[off] @ b[rows[off]]) / self.diag[j]
        return b


def tri_solve(F, rhs, mode: str):
    """Solve with the triangular part of a factor.

    ``F`` is a :class:`QrFactor` (upper ``R``), a :class:`CholFactor`
    (lower ``L``) or a bare triangular sparse matrix.  ``mode`` is one of
    ``lower``, ``upper``, ``lower-transpose``, ``upper-transpose``: the
    shape of the stored factor, optionally applied transposed.  Sparse
    right-hand sides give a sparse result.  Permutations are not applied.
    """
    if mode not in ("lower", "upper", "lower-transpose", "upper-transpose"):
        raise ValueError(f"unknown mode {mode!r}")
    lower = mode.startswith("lower")
    if isinstance(F, (QrFactor, CholFactor)):
        tri = F.tri
    elif isinstance(F, Triangular):
        tri = F
    else:
        tri = Triangular(F, lower=lower)
    if tri.lower != lower:
        raise ValueError(f"mode {mode!r} does not match the stored factor")
    sparse_rhs = sp.issparse(rhs)
    out = tri.solve(rhs.toarray() if sparse_rhs else rhs, transpose=mode.endswith("transpose"))
    return as_csc(out) if sparse_rhs else out


# --------------------------------------------------------------------------
# orderings


def minimum_degree_order(H) -> np.ndarray:
    """Greedy minimum-degree ordering on the graph of symmetric ``H``.

    Exact elimination graph with a lazy heap; ties broken by node index.
    """
    S = sp.csr_matrix(H)
    n = S.shape[0]
    S = (abs(S) + abs(S.T)).tocsr()
    adj = [set(S.indices[S.indptr[i]:S.indptr[i + 1]]) - {i} for i in range(n)]
    heap = [(len(a), i) for i, a in enumerate(adj)]
    heapq.heapify(heap)
    done = np.zeros(n, dtype=bool)
    order = []
    while heap:
        deg, v = heapq.heappop(heap)
        if done[v] or deg != len(adj[v]):
            continue
        done[v] = True
        order.append(v)
        nbrs = adj[v]
        for u in nbrs:
            adj[u].discard(v)
            adj[u] |= nbrs
            adj[u].discard(u)
            heapq.heappush(heap, (len(adj[u]), u))
        adj[v] = set()
    return np.asarray(order, dtype=np.int64)


def column_order(A) -> np.ndarray:
    """Fill-reducing column order for a QR of ``A`` (min degree on ``A^T A``)."""
    A = sp.csc_matrix(A)
    pattern = A.copy()
    pattern.data = np.ones_like(pattern.data)
    return minimum_degree_order(pattern.T @ pattern)


# --------------------------------------------------------------------------
# Householder QR


@dataclass
class QrFactor:
    R: sp.csc_matrix
    reflectors: list
    colperm: np.ndarray
    nrows: int
    f: np.ndarray | None = None
    g_norm: float | None = None
    tri: Triangular = field(init=False, repr=False)

    def __post_init__(self):
        self.tri = Triangular(self.R, lower=False)

    @property
    def ncols(self) -> int:
        return self.R.shape[1]

    def apply_qt(self, x) -> np.ndarray:
        """``Q^T x`` for a length-``nrows`` vector (or matrix)."""
        y = np.array(x, dtype=np.float64, copy=True)
        for idx, v, tau in self.reflectors:
            y[idx] -= tau * np.outer(v, v @ y[idx]) if y.ndim == 2 else tau * v * (v @ y[idx])
        return y

    def apply_q(self, x) -> np.ndarray:
        y = np.array(x, dtype=np.float64, copy=True)
        for idx, v, tau in reversed(self.reflectors):
            y[idx] -= tau * np.outer(v, v @ y[idx]) if y.ndim == 2 else tau * v * (v @ y[idx])
        return y

    def solve_rpt(self, rhs) -> np.ndarray:
        """Solve ``R P^T y = rhs``."""
        u = self.tri.solve(rhs)
        y = np.empty_like(u)
        y[self.colperm] = u
        return y

    def solve_prt(self, rhs) -> np.ndarray:
        """Solve ``P R^T K = rhs`` (rhs may hold several columns)."""
        rhs = np.asarray(rhs, dtype=np.float64)
        return self.tri.solve(rhs[self.colperm], transpose=True)


def householder_qr(M, rhs=None, pivoting: str = "none", order=None, rank_tol: float = RANK_TOL) -> QrFactor:
    """Householder QR of ``M[:, order]`` with optional column-norm pivoting.

    If ``rhs`` is given it is carried along as an extra column so that
    ``Q^T [M P, rhs] = [[R, f], [0, g]]``; ``f`` and ``||g||`` are stored.
    Raises :class:`RankDeficientError` when ``|R_ii| <= rank_tol * max|R_jj|``.
    """
    if pivoting not in ("none", "column-norm"):
        raise ValueError(f"unknown pivoting {pivoting!r}")
    Ms = sp.csc_matrix(M) if sp.issparse(M) else np.asarray(M, dtype=np.float64)
    m, n = Ms.shape
    if m < n:
        raise DimensionError(f"householder_qr needs nrows >= ncols, got {m}x{n}")
    if 8 * m * (n + 1) > DENSE_BYTES_LIMIT:
        raise MemoryError(f"{m}x{n} QR exceeds the dense work-array limit")
    perm = np.arange(n) if order is None else np.asarray(order, dtype=np.int64)
    W = np.zeros((m, n + 1), order="F")
    W[:, :n] = Ms[:, perm].toarray() if sp.issparse(Ms) else Ms[:, perm]
    if rhs is not None:
        rhs = np.asarray(rhs, dtype=np.float64)
        if rhs.shape != (m,):
            raise DimensionError("rhs length must equal nrows")
        W[:, n] = rhs
    norms = np.sum(W[:, :n] ** 2, axis=0) if pivoting == "column-norm" else None
    norms0 = None if norms is None else norms.copy()
    reflectors = []
    for k in range(n):
        if norms is not None:
            j = k + int(np.argmax(norms[k:]))
            if j != k:
                W[:, [k, j]] = W[:, [j, k]]
                perm[[k, j]] = perm[[j, k]]
                norms[[k, j]] = norms[[j, k]]
                norms0[[k, j]] = norms0[[j, k]]
        x = W[k:, k]
        nz = np.flatnonzero(x)
        alpha = np.linalg.norm(x[nz]) if nz.size else 0.0
        if alpha == 0.0:
            reflectors.append((np.empty(0, dtype=np.int64), np.empty(0), 0.0))
            continue
        # reflector v = x - beta e1, with beta of opposite sign to x[0]
        beta = -alpha if x[0] >= 0 else alpha
        idx = nz + k
        if idx[0] != k:
            idx = np.concatenate(([k], idx))
        v = W[idx, k].copy()
        v[0] -= beta
        tau = 2.0 / (v @ v)
        block = W[idx, k + 1:]
        coef = v @ block
        touch = np.flatnonzero(coef)
        if touch.size:
            W[np.ix_(idx, k + 1 + touch)] -= tau * np.outer(v, coef[touch])
        W[k:, k] = 0.0
        W[k, k] = beta
        reflectors.append((idx, v, tau))
        if norms is not None:
            norms[k + 1:] -= W[k, k + 1:n] ** 2
            stale = norms[k + 1:] <= 1e-8 * norms0[k + 1:]
            if np.any(stale):
                cols = k + 1 + np.flatnonzero(stale)
                norms[cols] = np.sum(W[k + 1:, cols] ** 2, axis=0)
                norms0[cols] = norms[cols]
    R = sp.csc_matrix(np.triu(W[:n, :n]))
    R.eliminate_zeros()
    d = np.abs(R.diagonal())
    big = d.max() if n else 0.0
    bad = np.flatnonzero(d <= rank_tol * big) if n else np.empty(0, dtype=np.int64)
    if n and (big == 0.0 or bad.size):
        i = int(bad[0]) if bad.size else 0
        raise RankDeficientError(f"rank deficiency detected at column {i} of R", index=i)
    f = W[:n, n].copy() if rhs is not None else None
    g = float(np.linalg.norm(W[n:, n])) if rhs is not None else None
    return QrFactor(R=R, reflectors=reflectors, colperm=perm, nrows=m, f=f, g_norm=g)


# --------------------------------------------------------------------------
# Cholesky


@dataclass
class CholFactor:
    L: sp.csc_matrix
    perm: np.ndarray
    is_incomplete: bool = False
    shift: float = 0.0
    tri: Triangular = field(init=False, repr=False)

    def __post_init__(self):
        self.tri = Triangular(self.L, lower=True)
        self.iperm = inverse_permutation(self.perm)

    @property
    def n(self) -> int:
        return self.L.shape[0]

    def solve_lower(self, r) -> np.ndarray:
        """Solve ``(P^T L) u = r``."""
        r = np.asarray(r, dtype=np.float64)
        return self.tri.solve(r[self.perm])

    def solve_upper(self, r) -> np.ndarray:
        """Solve ``(L^T P) u = r``."""
        z = self.tri.solve(r, transpose=True)
        return z[self.iperm]

    def solve(self, b) -> np.ndarray:
        """Solve ``P^T L L^T P x = b``."""
        return self.solve_upper(self.solve_lower(b))

    def reconstruct(self) -> sp.csc_matrix:
        """Return ``P^T L L^T P`` (the matrix this factor represents)."""
        LLt = (self.L @ self.L.T).tocsc()
        return as_csc(LLt[self.iperm][:, self.iperm])


def _symmetric_input(H):
    H = as_csc(H)
    n = H.shape[0]
    if H.shape != (n, n):
        raise DimensionError("matrix must be square")
    return symmetric_from_lower(H)


def _etree(U: sp.csc_matrix) -> np.ndarray:
    """Elimination tree from the upper triangle (CSparse ``cs_etree``)."""
    n = U.shape[0]
    parent = np.full(n, -1, dtype=np.int64)
    ancestor = np.full(n, -1, dtype=np.int64)
    ptr, idx = U.indptr, U.indices
    for k in range(n):
        for i in idx[ptr[k]:ptr[k + 1]]:
            while i != -1 and i < k:
                nxt = ancestor[i]
                ancestor[i] = k
                if nxt == -1:
                    parent[i] = k
                i = nxt
    return parent


def _ereach(U, k, parent, mark):
    """Pattern of row ``k`` of L in topological order."""
    ptr, idx = U.indptr, U.indices
    mark[k] = k
    out = []
    for i in idx[ptr[k]:ptr[k + 1]]:
        if i >= k:
            continue
        path = []
        while mark[i] != k:
            path.append(i)
            mark[i] = k
            i = parent[i]
        out.extend(path)
    return out


def symbolic_cholesky(H, perm=None):
    """Row patterns and column counts of the Cholesky factor (no numerics)."""
    Hs = _symmetric_input(H)
    n = Hs.shape[0]
    perm = np.arange(n) if perm is None else np.asarray(perm)
    U = as_csc(sp.triu(Hs[perm][:, perm]))
    parent = _etree(U)
    mark = np.full(n, -1, dtype=np.int64)
    counts = np.ones(n, dtype=np.int64)
    for k in range(n):
        for j in _ereach(U, k, parent, mark):
            counts[j] += 1
    return parent, counts


def cholesky(H, ordering: str = "fill-reducing", perm=None) -> CholFactor:
    """Up-looking sparse Cholesky of symmetric positive definite ``H``.

    Only the lower triangle of ``H`` is read.  Raises
    :class:`NotPositiveDefiniteError` carrying the failing pivot index.
    """
    Hs = _symmetric_input(H)
    n = Hs.shape[0]
    if perm is None:
        if ordering == "fill-reducing":
            perm = minimum_degree_order(Hs)
        elif ordering == "natural":
            perm = np.arange(n)
        else:
            raise ValueError(f"unknown ordering {ordering!r}")
    perm = np.asarray(perm, dtype=np.int64)
    U = as_csc(sp.triu(Hs[perm][:, perm]))
    parent = _etree(U)
    mark = np.full(n, -1, dtype=np.int64)
    patterns = [_ereach(U, k, parent, mark) for k in range(n)]
    counts = np.ones(n, dtype=np.int64)
    for pat in patterns:
        if pat:
            np.add.at(counts, pat, 1)
    colptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=colptr[1:])
    Li = np.empty(colptr[-1], dtype=np.int64)
    Lx = np.empty(colptr[-1])
    fill = colptr[:-1].copy()  # next free slot per column
    x = np.zeros(n)
    ptr, idx, val = U.indptr, U.indices, U.data
    for k in range(n):
        lo, hi = ptr[k], ptr[k + 1]
        x[idx[lo:hi]] = val[lo:hi]
        d = x[k]
        x[k] = 0.0
        # triangular solve in topological order of the elimination tree
        # ascending order is topological: etree parents have larger indices
        for j in sorted(patterns[k]):
            lkj = x[j] / Lx[colptr[j]]
            x[j] = 0.0
            s, e = colptr[j] + 1, fill[j]
            if e > s:
                x[Li[s:e]] -= Lx[s:e] * lkj
            d -= lkj * lkj
            Li[e] = k
            Lx[e] = lkj
            fill[j] = e + 1
        if not d > 0.0:
            raise NotPositiveDefiniteError(f"nonpositive pivot {d:.3e} at step {k}", pivot=k)
        Li[fill[k]] = k
        Lx[fill[k]] = np.sqrt(d)
        fill[k] += 1
    L = sp.csc_matrix((Lx, Li, colptr), shape=(n, n))
    L.eliminate_zeros()
    return CholFactor(L=L, perm=perm)


def incomplete_cholesky(H, shift: float = 0.0, max_restarts: int = 20, perm=None) -> CholFactor:
    """Zero-fill incomplete Cholesky, pattern of ``tril(H)``.

    On a nonpositive pivot the factorization restarts on ``H + alpha I``
    with ``alpha`` starting at ``max(shift, 1e-8) * max(diag(H))`` and
    doubling, at most ``max_restarts`` times.
    """
    Hs = _symmetric_input(H)
    n = Hs.shape[0]
    perm = np.arange(n) if perm is None else np.asarray(perm, dtype=np.int64)
    Hp = Hs[perm][:, perm]
    maxdiag = float(np.max(np.abs(Hp.diagonal()))) if n else 1.0
    alpha = shift * maxdiag
    for attempt in range(max_restarts + 1):
        try:
            L = _ic0(Hp, alpha)
            return CholFactor(L=L, perm=perm, is_incomplete=True, shift=alpha)
        except NotPositiveDefiniteError:
            alpha = max(shift, 1e-8) * maxdiag if attempt == 0 else 2.0 * alpha
    raise BreakdownError(f"incomplete Cholesky failed after {max_restarts} restarts")


def _ic0(Hp, alpha):
    n = Hp.shape[0]
    U = as_csc(sp.triu(Hp) + alpha * sp.identity(n, format="csc"))
    # row k of L~ takes the pattern of column k of U (rows < k); column j of
    # L~ takes the strict lower pattern of column j plus the diagonal
    strict = sp.csc_matrix(sp.tril(Hp, -1))
    strict.eliminate_zeros()
    colptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.diff(strict.indptr) + 1, out=colptr[1:])
    Li = np.empty(colptr[-1], dtype=np.int64)
    Lx = np.empty(colptr[-1])
    fill = colptr[:-1].copy()
    x = np.zeros(n)
    inpat = np.zeros(n, dtype=bool)
    ptr, idx, val = U.indptr, U.indices, U.data
    for k in range(n):
        lo, hi = ptr[k], ptr[k + 1]
        rows = idx[lo:hi]
        x[rows] = val[lo:hi]
        inpat[rows] = True
        d = x[k]
        for j in rows:
            if j >= k:
                continue
            lkj = x[j] / Lx[colptr[j]]
            s, e = colptr[j] + 1, fill[j]
            if e > s:
                tgt = Li[s:e]
                keep = inpat[tgt]
                x[tgt[keep]] -= Lx[s:e][keep] * lkj
            d -= lkj * lkj
            Li[e] = k
            Lx[e] = lkj
            fill[j] = e + 1
        x[rows] = 0.0
        inpat[rows] = False
        if not d > 0.0:
            raise NotPositiveDefiniteError(f"nonpositive pivot at step {k}", pivot=k)
        Li[fill[k]] = k
        Lx[fill[k]] = np.sqrt(d)
        fill[k] += 1
    L = sp.csc_matrix((Lx, Li, colptr), shape=(n, n))
    L.eliminate_zeros()
    return L


def normal_matrix(A, shift: float = 0.0) -> sp.csc_matrix:
    """Lower triangle of ``A^T A + shift^2 I``."""
    if shift < 0:
        raise ValueError("shift must be nonnegative")
    A = as_csc(A)
    H = (A.T @ A).tocsc()
    if shift:
        H = H + shift * shift * sp.identity(A.shape[1], format="csc")
    return as_csc(sp.tril(H))


def dense_cholesky(S) -> np.ndarray:
    """Lower Cholesky factor of a small dense SPD matrix."""
    try:
        return np.linalg.cholesky(np.asarray(S, dtype=np.float64))
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"dense Cholesky failed: {exc}") from exc


def dense_cho_solve(Lw, rhs) -> np.ndarray:
    y = sla.solve_triangular(Lw, rhs, lower=True, check_finite=False)
    return sla.solve_triangular(Lw, y, lower=True, trans=1, check_finite=False)
