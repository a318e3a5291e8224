"""Sparse containers and the structural kernels every solver shares.

Matrices are carried as canonical :class:`scipy.sparse.csc_matrix` objects:
sorted row indices, duplicates summed, explicit zeros pruned.  ``indptr``,
``indices`` and ``data`` play the roles of column pointers, row indices and
values.  Permutations are plain integer arrays holding the forward map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError

SparseMatrix = sp.csc_matrix


def as_csc(M) -> sp.csc_matrix:
    """Return a canonical CSC copy of ``M`` (dense or any sparse format)."""
    if sp.issparse(M):
        out = sp.csc_matrix(M, dtype=np.float64, copy=True)
    else:
        arr = np.atleast_2d(np.asarray(M, dtype=np.float64))
        out = sp.csc_matrix(arr)
    out.sum_duplicates()
    out.eliminate_zeros()
    out.sort_indices()
    return out


def from_triplets(rows, cols, vals, shape) -> sp.csc_matrix:
    """Build a CSC matrix from coordinates; duplicates are summed."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64)
    M = sp.coo_matrix((vals, (rows, cols)), shape=shape)
    return as_csc(M)


def empty(nrows: int, ncols: int) -> sp.csc_matrix:
    return sp.csc_matrix((nrows, ncols), dtype=np.float64)


def check_csc(M: sp.csc_matrix) -> None:
    """Raise ``ValueError`` if ``M`` violates the canonical CSC invariants."""
    ptr, idx = M.indptr, M.indices
    if ptr[0] != 0 or ptr[-1] != M.nnz or np.any(np.diff(ptr) < 0):
        raise ValueError("column pointer array is malformed")
    if idx.size and (idx.min() < 0 or idx.max() >= M.shape[0]):
        raise ValueError("row index out of range")
    for j in range(M.shape[1]):
        seg = idx[ptr[j]:ptr[j + 1]]
        if np.any(np.diff(seg) <= 0):
            raise ValueError(f"row indices of column {j} are not strictly increasing")
    if np.any(M.data == 0.0):
        raise ValueError("explicit zero stored")


def check_finite(*vectors) -> None:
    for v in vectors:
        if v is not None and not np.all(np.isfinite(v)):
            raise ValueError("vector contains NaN or Inf")


def transpose(M: sp.csc_matrix) -> sp.csc_matrix:
    """Explicit transpose, returned in CSC form (row access of ``M``)."""
    return as_csc(M.T)


def spmv(M: sp.csc_matrix, x, transpose: bool = False) -> np.ndarray:
    """Return ``M @ x`` or ``M.T @ x``."""
    x = np.asarray(x, dtype=np.float64)
    need = M.shape[0] if transpose else M.shape[1]
    if x.ndim != 1 or x.shape[0] != need:
        raise DimensionError(
            f"spmv: vector of length {x.shape[0] if x.ndim else 0} "
            f"does not conform to {M.shape}{' (transposed)' if transpose else ''}"
        )
    return M.T @ x if transpose else M @ x


def column_norms_squared(M: sp.csc_matrix) -> np.ndarray:
    """Squared 2-norm of every column; empty columns give 0."""
    M = sp.csc_matrix(M)
    cols = np.repeat(np.arange(M.shape[1]), np.diff(M.indptr))
    return np.bincount(cols, weights=M.data ** 2, minlength=M.shape[1])


@dataclass(frozen=True)
class ScalingInfo:
    """Diagonal column scaling ``D`` (stored as its diagonal)."""

    diag: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.diag, dtype=np.float64)
        if np.any(~np.isfinite(d)) or np.any(d <= 0):
            raise ValueError("scaling entries must be positive and finite")
        object.__setattr__(self, "diag", d)

    @classmethod
    def identity(cls, n: int) -> "ScalingInfo":
        return cls(np.ones(n))

    def unscale(self, y) -> np.ndarray:
        """Map a solution of the scaled problem back: ``x = D y``."""
        return self.diag * np.asarray(y)


def normalize_columns(M: sp.csc_matrix):
    """Scale every column to unit 2-norm.

    Returns ``(M D, ScalingInfo(D))`` with ``D_ii = 1 / ||M e_i||``.
    """
    M = as_csc(M)
    w = column_norms_squared(M)
    null = np.flatnonzero(w == 0)
    if null.size:
        raise ValueError(f"column {int(null[0])} is null; drop null columns first")
    d = 1.0 / np.sqrt(w)
    out = M @ sp.diags(d)
    return as_csc(out), ScalingInfo(d)


def row_counts(M: sp.csc_matrix) -> np.ndarray:
    return np.bincount(M.indices, minlength=M.shape[0])


def detect_dense_rows(M: sp.csc_matrix, density: float = 0.05) -> np.ndarray:
    """Rows with at least ``density * ncols`` nonzeros.

    Sorted by decreasing nonzero count, ties by ascending row index.  This is
    a single-threshold rule, not a recursive detector.
    """
    if not 0 < density <= 1:
        raise ValueError("density must lie in (0, 1]")
    counts = row_counts(M)
    rows = np.flatnonzero(counts >= density * M.shape[1])
    order = np.lexsort((rows, -counts[rows]))
    return rows[order]


def densest_rows(M: sp.csc_matrix, k: int) -> np.ndarray:
    """The ``k`` rows with most nonzeros (same ordering rule as above)."""
    counts = row_counts(M)
    order = np.lexsort((np.arange(M.shape[0]), -counts))
    return order[:k]


def split_rows(M: sp.csc_matrix, rows):
    """Split ``M`` into ``(A, C)``: ``C`` holds ``rows`` in the given order,
    ``A`` the remaining rows in their original order."""
    M = as_csc(M)
    rows = np.asarray(rows, dtype=np.int64).reshape(-1)
    if rows.size and (rows.min() < 0 or rows.max() >= M.shape[0]):
        raise IndexError("row index out of range")
    if np.unique(rows).size != rows.size:
        raise ValueError("duplicate row index")
    keep = np.ones(M.shape[0], dtype=bool)
    keep[rows] = False
    R = M.tocsr()
    A = as_csc(R[np.flatnonzero(keep)])
    C = as_csc(R[rows]) if rows.size else empty(0, M.shape[1])
    return A, C


def drop_null_columns(M: sp.csc_matrix):
    """Remove empty columns.  Returns ``(M', removed)`` with ``removed`` ascending."""
    M = as_csc(M)
    nz = np.diff(M.indptr) > 0
    removed = np.flatnonzero(~nz)
    if removed.size == 0:
        return M, removed
    return as_csc(M[:, np.flatnonzero(nz)]), removed


def inverse_permutation(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.int64)
    inv = np.empty_like(p)
    inv[p] = np.arange(p.size, dtype=np.int64)
    return inv


def check_permutation(p) -> None:
    p = np.asarray(p)
    if p.ndim != 1 or not np.array_equal(np.sort(p), np.arange(p.size)):
        raise ValueError("not a permutation")


def lower_triangle(H: sp.csc_matrix) -> sp.csc_matrix:
    return as_csc(sp.tril(H))


def symmetric_from_lower(Hl: sp.csc_matrix) -> sp.csc_matrix:
    """Full symmetric matrix from its stored lower triangle."""
    Hl = sp.tril(Hl)
    return as_csc(Hl + sp.tril(Hl, -1).T)
