"""Matrix Market reading and writing (real and integer fields).

Errors carry the 1-based line number of the offending line.  Values are
parsed with ``float``, which rounds decimal and exponent forms correctly,
and written with ``repr`` so a write/read round trip is bit-identical.
"""

from __future__ import annotations

import os

import numpy as np
import scipy.sparse as sp

from .errors import MatrixMarketError
from .sparse import as_csc

_FIELDS = ("real", "integer", "double")
_SYMMETRIES = ("general", "symmetric", "skew-symmetric")


def _data_lines(fh, start):
    """Yield ``(lineno, tokens)`` for non-blank, non-comment lines."""
    for lineno, line in enumerate(fh, start=start):
        s = line.strip()
        if not s or s.startswith("%"):
            continue
        yield lineno, s.split()


def _ints(tokens, lineno, count, what):
    if len(tokens) != count:
        raise MatrixMarketError(f"expected {count} fields in {what}, got {len(tokens)}", line=lineno)
    try:
        return [int(t) for t in tokens]
    except ValueError:
        raise MatrixMarketError(f"non-integer value in {what}", line=lineno) from None


def _value(token, lineno):
    try:
        return float(token)
    except ValueError:
        raise MatrixMarketError(f"cannot parse value {token!r}", line=lineno) from None


def read_matrix_market(path: str | os.PathLike) -> sp.csc_matrix:
    """Read a coordinate or array Matrix Market file into canonical CSC.

    Symmetric and skew-symmetric inputs are expanded to the full pattern,
    duplicate coordinate entries are summed.
    """
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        header = fh.readline()
        parts = header.strip().lower().split()
        if len(parts) != 5 or parts[0] != "%%matrixmarket" or parts[1] != "matrix":
            raise MatrixMarketError("malformed header; expected '%%MatrixMarket matrix <format> <field> <symmetry>'",
                                    line=1)
        fmt, fld, sym = parts[2:]
        if fmt not in ("coordinate", "array"):
            raise MatrixMarketError(f"unsupported format {fmt!r}", line=1)
        if fld not in _FIELDS:
            raise MatrixMarketError(f"unsupported field {fld!r}; only real and integer are accepted", line=1)
        if sym not in _SYMMETRIES:
            raise MatrixMarketError(f"unsupported symmetry {sym!r}", line=1)
        lines = _data_lines(fh, start=2)
        try:
            lineno, tokens = next(lines)
        except StopIteration:
            raise MatrixMarketError("missing size line", line=2) from None
        if fmt == "coordinate":
            nrows, ncols, nnz = _ints(tokens, lineno, 3, "size line")
        else:
            nrows, ncols = _ints(tokens, lineno, 2, "size line")
            nnz = None
        if nrows < 0 or ncols < 0 or (nnz is not None and nnz < 0):
            raise MatrixMarketError("negative dimension", line=lineno)
        if sym != "general" and nrows != ncols:
            raise MatrixMarketError(f"{sym} matrix must be square", line=lineno)
        if fmt == "coordinate":
            M = _read_coordinate(lines, nrows, ncols, nnz, sym, lineno)
        else:
            M = _read_array(lines, nrows, ncols, sym, lineno)
    return M


def _read_coordinate(lines, nrows, ncols, nnz, sym, size_line):
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz, dtype=np.float64)
    k = 0
    last = size_line
    for lineno, tokens in lines:
        last = lineno
        if k == nnz:
            raise MatrixMarketError(f"more than the declared {nnz} entries", line=lineno)
        if len(tokens) != 3:
            raise MatrixMarketError(f"expected 'row col value', got {len(tokens)} fields", line=lineno)
        i, j = _ints(tokens[:2], lineno, 2, "entry")
        if not (1 <= i <= nrows and 1 <= j <= ncols):
            raise MatrixMarketError(f"index ({i}, {j}) out of bounds for {nrows}x{ncols}", line=lineno)
        if sym != "general" and i < j:
            raise MatrixMarketError("entry above the diagonal in a symmetric file", line=lineno)
        if sym == "skew-symmetric" and i == j:
            raise MatrixMarketError("diagonal entry in a skew-symmetric file", line=lineno)
        rows[k], cols[k], vals[k] = i - 1, j - 1, _value(tokens[2], lineno)
        k += 1
    if k != nnz:
        raise MatrixMarketError(f"expected {nnz} entries, found {k}", line=last)
    if sym != "general":
        off = rows != cols
        sign = -1.0 if sym == "skew-symmetric" else 1.0
        rows, cols, vals = (np.concatenate([rows, cols[off]]), np.concatenate([cols, rows[off]]),
                            np.concatenate([vals, sign * vals[off]]))
    return as_csc(sp.coo_matrix((vals, (rows, cols)), shape=(nrows, ncols)))


def _read_array(lines, nrows, ncols, sym, size_line):
    # column-major; symmetric storage lists the lower triangle only
    if sym == "general":
        slots = [(i, j) for j in range(ncols) for i in range(nrows)]
    elif sym == "symmetric":
        slots = [(i, j) for j in range(ncols) for i in range(j, nrows)]
    else:
        slots = [(i, j) for j in range(ncols) for i in range(j + 1, nrows)]
    D = np.zeros((nrows, ncols))
    k = 0
    last = size_line
    for lineno, tokens in lines:
        last = lineno
        if len(tokens) != 1:
            raise MatrixMarketError(f"expected one value per line, got {len(tokens)}", line=lineno)
        if k == len(slots):
            raise MatrixMarketError(f"more than the expected {len(slots)} values", line=lineno)
        i, j = slots[k]
        D[i, j] = _value(tokens[0], lineno)
        k += 1
    if k != len(slots):
        raise MatrixMarketError(f"expected {len(slots)} values, found {k}", line=last)
    if sym == "symmetric":
        D = D + np.tril(D, -1).T
    elif sym == "skew-symmetric":
        D = D - D.T
    return as_csc(D)


def write_matrix_market(path: str | os.PathLike, M, comment: str = "") -> None:
    """Write ``M`` as a general real coordinate file (1-based, ``repr`` values)."""
    C = as_csc(M).tocoo()
    order = np.lexsort((C.row, C.col))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        for line in comment.splitlines():
            fh.write(f"% {line}\n")
        fh.write(f"{C.shape[0]} {C.shape[1]} {C.nnz}\n")
        for k in order:
            fh.write(f"{C.row[k] + 1} {C.col[k] + 1} {float(C.data[k])!r}\n")
