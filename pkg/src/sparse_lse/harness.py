"""Problem ingestion, random instances, the dense oracle, method dispatch
and report emission."""

from __future__ import annotations

import csv
import io
import json
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .augmented import (
    default_parameters,
    solve_lagrange,
    solve_qr_update,
    solve_reg_cholesky,
    solve_reg_krylov,
    solve_three_block,
    solve_weighted_normal,
)
from .elimination import solve_direct_elim
from .errors import DimensionError, LseError, NonConvergenceError, NonUniqueSolutionError, RankDeficientError
from .nullspace import solve_nullspace
from .problem import LseProblem, SolveReport
from .sparse import (
    ScalingInfo,
    as_csc,
    densest_rows,
    detect_dense_rows,
    drop_null_columns,
    normalize_columns,
    split_rows,
)

ORACLE_MAX_DIM = 2000
RANK_RTOL = 1e-12


# --------------------------------------------------------------------------
# problem construction


def assemble_problem(M, mode: str = "density", density: float = 0.05, remove: int = 20,
                     keep: int | None = None, transpose: str = "auto", ident: str = "",
                     provenance: str = "") -> LseProblem:
    """Turn a single matrix into an LSE test problem.

    * transpose when the matrix is wide (``transpose='auto'``; ``'never'``
      and ``'always'`` are also accepted)
    * ``mode='density'``: rows with at least ``density * ncols`` nonzeros
      form ``C``, every other row goes to ``A``
    * ``mode='densest'``: the ``remove`` densest rows leave ``A``; the
      ``keep`` densest of those form ``C`` and the rest are discarded
    * columns that are null in ``A`` are dropped from both blocks, the
      extended matrix ``[A; C]`` is column-normalized and ``b``, ``d`` are
      all ones

    The result depends on the inputs only.
    """
    M = as_csc(M)
    if M.shape[0] == 0 or M.shape[1] == 0 or M.nnz == 0:
        raise DimensionError("input matrix is empty")
    if transpose not in ("auto", "never", "always"):
        raise ValueError(f"unknown transpose rule {transpose!r}")
    transposed = transpose == "always" or (transpose == "auto" and M.shape[0] < M.shape[1])
    if transposed:
        M = as_csc(M.T)
    if mode == "density":
        c_rows = detect_dense_rows(M, density)
        discarded = np.empty(0, dtype=np.int64)
    elif mode == "densest":
        remove = min(int(remove), M.shape[0])
        keep = remove if keep is None else int(keep)
        if not 0 <= keep <= remove:
            raise ValueError(f"keep must lie in [0, remove={remove}], got {keep}")
        removed = densest_rows(M, remove)
        c_rows, discarded = removed[:keep], removed[keep:]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    A, _ = split_rows(M, np.concatenate([c_rows, discarded]).astype(np.int64))
    C = as_csc(M.tocsr()[c_rows]) if c_rows.size else sp.csc_matrix((0, M.shape[1]))
    _, null_cols = drop_null_columns(A)
    if null_cols.size:
        kept = np.setdiff1d(np.arange(M.shape[1]), null_cols)
        A, C = as_csc(A[:, kept]), as_csc(C[:, kept])
    m, p = A.shape[0], C.shape[0]
    if A.shape[0] == 0 or A.shape[1] == 0:
        raise DimensionError("A is empty after splitting")
    if p >= A.shape[1]:
        raise DimensionError(f"p={p} is not below n={A.shape[1]} after cleanup")
    E, scaling = normalize_columns(sp.vstack([A, C]))
    A, C = as_csc(E[:m]), as_csc(E[m:])
    meta = {"transposed": bool(transposed), "constraint_rows": c_rows.tolist(),
            "discarded_rows": discarded.tolist(), "removed_columns": null_cols.tolist(),
            "nnz_extended": int(E.nnz)}
    return LseProblem(A=A, C=C, b=np.ones(m), d=np.ones(p), scaling=scaling,
                      provenance=provenance, ident=ident, meta=meta)


def _dense_rank(D) -> int:
    if min(D.shape) == 0:
        return 0
    s = np.linalg.svd(D, compute_uv=False)
    return int(np.sum(s > RANK_RTOL * s[0]))


def generate_random_problem(m: int, n: int, p: int, density: float = 0.05, cond_target: float = 1e6,
                            seed: int = 0, c_density: float = 0.5, max_attempts: int = 10) -> LseProblem:
    """Random sparse instance with ``b = d = 1`` and unit-norm columns of ``[A; C]``.

    ``A`` gets at least one entry per column; ``C`` is full row rank,
    ``A`` has full column rank and its condition number is at most
    ``cond_target`` (all checked densely).  Failed draws are redrawn up to
    ``max_attempts`` times.
    """
    if not m > n > p >= 0:
        raise DimensionError(f"need m > n > p >= 0, got m={m}, n={n}, p={p}")
    if not 0 < density <= 1 or not 0 < c_density <= 1:
        raise ValueError("densities must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        A = sp.random(m, n, density=density, random_state=rng, format="lil",
                      data_rvs=rng.standard_normal)
        for j in np.flatnonzero(np.asarray(A.getnnz(axis=0)) == 0):
            A[rng.integers(m), j] = rng.standard_normal()
        C = sp.random(p, n, density=c_density, random_state=rng, format="csc",
                      data_rvs=rng.standard_normal)
        E, scaling = normalize_columns(sp.vstack([A.tocsc(), C]))
        Ad, Cd = E[:m].toarray(), E[m:].toarray()
        if _dense_rank(Cd) != p or _dense_rank(Ad) != n:
            continue
        if np.linalg.cond(Ad) > cond_target:
            continue
        return LseProblem(A=E[:m], C=E[m:], b=np.ones(m), d=np.ones(p), scaling=scaling,
                          provenance=f"random(m={m}, n={n}, p={p}, density={density}, seed={seed})",
                          ident=f"rand-{m}x{n}-p{p}-s{seed}")
    raise RankDeficientError(f"no acceptable instance after {max_attempts} attempts")


def save_problem(path, prob: LseProblem) -> None:
    np.savez(path, A_data=prob.A.data, A_indices=prob.A.indices, A_indptr=prob.A.indptr,
             A_shape=np.array(prob.A.shape), C_data=prob.C.data, C_indices=prob.C.indices,
             C_indptr=prob.C.indptr, C_shape=np.array(prob.C.shape), b=prob.b, d=prob.d,
             scaling=prob.scaling.diag, provenance=np.array(prob.provenance), ident=np.array(prob.ident))


def load_problem(path) -> LseProblem:
    with np.load(path, allow_pickle=False) as z:
        A = sp.csc_matrix((z["A_data"], z["A_indices"], z["A_indptr"]), shape=tuple(z["A_shape"]))
        C = sp.csc_matrix((z["C_data"], z["C_indices"], z["C_indptr"]), shape=tuple(z["C_shape"]))
        return LseProblem(A=A, C=C, b=z["b"], d=z["d"], scaling=ScalingInfo(z["scaling"]),
                          provenance=str(z["provenance"]), ident=str(z["ident"]))


# --------------------------------------------------------------------------
# dense oracle


def dense_kkt_oracle(prob: LseProblem):
    """Dense reference solution ``(x*, lambda*)`` with ``A^T(b - A x*) = C^T lambda*``.

    Uses an orthogonal basis route: ``C^T = Q R`` gives the minimum-norm
    particular solution and an orthonormal null-space basis; the reduced
    least-squares problem is solved by SVD.  The optimality conditions are
    checked before returning.
    """
    n, p = prob.n, prob.p
    if n + p > ORACLE_MAX_DIM:
        raise DimensionError(f"oracle is limited to n + p <= {ORACLE_MAX_DIM}")
    A, C = prob.A.toarray(), prob.C.toarray()
    b, d = prob.b, prob.d
    if _dense_rank(np.vstack([A, C])) < n:
        raise NonUniqueSolutionError("[A; C] is rank deficient: N(A) and N(C) intersect")
    if p:
        Q, R = np.linalg.qr(C.T, mode="complete")
        if _dense_rank(R[:p]) < p:
            raise RankDeficientError("C is not of full row rank")
        x1 = Q[:, :p] @ sla.solve_triangular(R[:p], d, trans="T")
        Z = Q[:, p:]
    else:
        x1, Z = np.zeros(n), np.eye(n)
    y, *_ = np.linalg.lstsq(A @ Z, b - A @ x1, rcond=None)
    x = x1 + Z @ y
    g = A.T @ (b - A @ x)
    if p:
        lam = sla.solve_triangular(R[:p], Q[:, :p].T @ g)
    else:
        lam = np.zeros(0)
    scale = max(np.linalg.norm(A.T @ b), np.linalg.norm(d), 1e-300)
    kkt = math.hypot(np.linalg.norm(g - C.T @ lam), np.linalg.norm(C @ x - d))
    if kkt > 1e-10 * scale:
        warnings.warn(f"oracle optimality residual {kkt / scale:.2e} above 1e-10", RuntimeWarning, stacklevel=2)
    return x, lam


# --------------------------------------------------------------------------
# dispatch


_METHODS = {
    "nullspace": (solve_nullspace, ("theta", "tol", "maxit", "inner")),
    "direct-elim": (solve_direct_elim, ("tau", "tol", "maxit", "density")),
    "lagrange": (solve_lagrange, ("reg", "route")),
    "qr-update": (solve_qr_update, ()),
    "three-block": (solve_three_block, ()),
    "reg-cholesky": (solve_reg_cholesky, ("omega",)),
    "reg-gmres": (lambda prob, **kw: solve_reg_krylov(prob, method="gmres", **kw),
                  ("omega", "quality", "tol", "maxit")),
    "reg-minres": (lambda prob, **kw: solve_reg_krylov(prob, method="minres", **kw),
                   ("omega", "quality", "tol", "maxit")),
    "weighted-normal": (solve_weighted_normal, ("gamma",)),
}
METHOD_TAGS = tuple(_METHODS)

# the parameter shown in the single parameter column of a report
_KEY_PARAM = {"nullspace": "theta", "direct-elim": "tau", "reg-cholesky": "omega",
              "reg-gmres": "omega", "reg-minres": "omega", "weighted-normal": "gamma", "lagrange": "reg"}


def _plain(v):
    """Convert numpy values to JSON-friendly Python objects."""
    if isinstance(v, np.ndarray):
        return [_plain(u) for u in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_plain(u) for u in v]
    if isinstance(v, np.generic):
        return v.item()
    return v


@dataclass
class RunRecord:
    problem_id: str
    method: str
    params: dict
    report: SolveReport | None
    wall_time: float
    p: int = 0
    status: str = "ok"
    message: str = ""

    def to_dict(self) -> dict:
        rep = None
        if self.report is not None:
            r = self.report
            rep = {"x": _plain(r.x), "norm_x": r.norm_x, "norm_r": r.norm_r, "norm_rc": r.norm_rc,
                   "iters": r.iters, "method_tag": r.method_tag,
                   "aux": {k: _plain(v) for k, v in r.aux.items()}}
        return {"problem_id": self.problem_id, "method": self.method, "p": self.p,
                "params": {k: _plain(v) for k, v in self.params.items()}, "report": rep,
                "wall_time": self.wall_time, "status": self.status, "message": self.message}

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        rep = d.get("report")
        report = None
        if rep is not None:
            report = SolveReport(x=np.asarray(rep["x"], dtype=np.float64), norm_x=rep["norm_x"],
                                 norm_r=rep["norm_r"], norm_rc=rep["norm_rc"], iters=rep["iters"],
                                 method_tag=rep["method_tag"], aux=dict(rep["aux"]))
        return cls(problem_id=d["problem_id"], method=d["method"], params=dict(d["params"]),
                   report=report, wall_time=d["wall_time"], p=d.get("p", 0),
                   status=d.get("status", "ok"), message=d.get("message", ""))


def run_method(prob: LseProblem, method: str, params: dict | None = None) -> RunRecord:
    """Run one method and capture the outcome in a record.

    Parameters the method does not take are ignored (so one parameter set
    can drive a batch).  Method failures end up in ``status``; only an
    unknown tag raises.
    """
    if method not in _METHODS:
        raise ValueError(f"unknown method {method!r}; valid tags: {', '.join(METHOD_TAGS)}")
    fn, accepted = _METHODS[method]
    kwargs = {k: v for k, v in (params or {}).items() if k in accepted and v is not None}
    omega, gamma = default_parameters()
    if "omega" in accepted:
        kwargs.setdefault("omega", omega)
    if "gamma" in accepted:
        kwargs.setdefault("gamma", gamma)
    t0 = time.perf_counter()
    status, message, report = "ok", "", None
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            report = fn(prob, **kwargs)
        if caught:
            message = "; ".join(str(w.message) for w in caught)
    except NonConvergenceError as exc:
        status, message = "nonconvergence", str(exc)
        if exc.x is not None:
            report = SolveReport.from_solution(prob, exc.x, method, iters=max(len(exc.history) - 1, 0))
    except (LseError, ValueError, MemoryError, np.linalg.LinAlgError) as exc:
        status, message = "error", f"{type(exc).__name__}: {exc}"
    wall = time.perf_counter() - t0
    return RunRecord(problem_id=prob.ident, method=method, params=kwargs, report=report,
                     wall_time=wall, p=prob.p, status=status, message=message)


def run_batch(prob: LseProblem, methods=METHOD_TAGS, params: dict | None = None) -> list[RunRecord]:
    return [run_method(prob, m, params) for m in methods]


# --------------------------------------------------------------------------
# reports

COLUMNS = ("identifier", "method", "p", "param", "norm_x", "norm_r", "norm_rc", "iters",
           "ndense_density", "time", "status")
_FLOAT_COLS = ("param", "norm_x", "norm_r", "norm_rc", "ndense_density", "time")
_INT_COLS = ("p", "iters")


def _row(rec: RunRecord) -> dict:
    key = _KEY_PARAM.get(rec.method)
    param = rec.params.get(key) if key else None
    r = rec.report
    aux = r.aux if r is not None else {}
    metric = aux.get("ndense", aux.get("density"))
    return {
        "identifier": rec.problem_id,
        "method": rec.method,
        "p": rec.p,
        "param": None if param is None else float(param),
        "norm_x": r.norm_x if r else None,
        "norm_r": r.norm_r if r else None,
        "norm_rc": r.norm_rc if r else None,
        "iters": r.iters if r else None,
        "ndense_density": None if metric is None else float(metric),
        "time": rec.wall_time,
        "status": rec.status,
    }


def _grouped(records):
    order = {}
    for rec in records:
        order.setdefault(rec.problem_id, len(order))
    return sorted(records, key=lambda rec: order[rec.problem_id])


def _sci(v) -> str:
    return "-" if v is None else f"{v:.3e}"


def emit_report(records, fmt: str = "json") -> bytes:
    """Serialize records; rows are grouped by problem identifier.

    ``json`` holds one object per record (report columns plus parameters,
    solution and diagnostics) with round-trippable floats; ``csv`` holds the
    report columns; ``table`` is a fixed-width text table with 4
    significant digits.
    """
    records = list(records)
    if not records:
        raise ValueError("no records to report")
    records = _grouped(records)
    if fmt == "json":
        out = []
        for rec in records:
            obj = _row(rec)
            obj["record"] = rec.to_dict()
            out.append(obj)
        return (json.dumps(out, indent=1) + "\n").encode()
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for rec in records:
            row = _row(rec)
            w.writerow(["" if row[c] is None else (repr(row[c]) if isinstance(row[c], float) else row[c])
                        for c in COLUMNS])
        return buf.getvalue().encode()
    if fmt == "table":
        lines = []
        header = ("identifier", "method", "p", "param", "||x||", "||r||", "||r_c||", "iters",
                  "ndense/dens", "time", "status")
        widths = (22, 15, 4, 10, 10, 10, 10, 6, 11, 10, 14)
        lines.append(" ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip())
        prev = None
        for rec in records:
            row = _row(rec)
            if prev is not None and row["identifier"] != prev:
                lines.append("")
            prev = row["identifier"]
            cells = (row["identifier"], row["method"], str(row["p"]), _sci(row["param"]),
                     _sci(row["norm_x"]), _sci(row["norm_r"]), _sci(row["norm_rc"]),
                     "-" if row["iters"] is None else str(row["iters"]),
                     _sci(row["ndense_density"]), _sci(row["time"]), row["status"])
            lines.append(" ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip())
        return ("\n".join(lines) + "\n").encode()
    raise ValueError(f"unknown report format {fmt!r}")


def parse_report(data: bytes, fmt: str = "json") -> list[dict]:
    """Parse the report columns back from ``json`` or ``csv`` output."""
    text = data.decode() if isinstance(data, (bytes, bytearray)) else data
    if fmt == "json":
        return [{c: obj[c] for c in COLUMNS} for obj in json.loads(text)]
    if fmt == "csv":
        rows = []
        for raw in csv.DictReader(io.StringIO(text)):
            row = {}
            for c in COLUMNS:
                v = raw[c]
                if c in _FLOAT_COLS:
                    row[c] = None if v == "" else float(v)
                elif c in _INT_COLS:
                    row[c] = None if v == "" else int(v)
                else:
                    row[c] = v
            rows.append(row)
        return rows
    raise ValueError(f"cannot parse report format {fmt!r}")


def parse_records(data: bytes) -> list[RunRecord]:
    """Full records back from ``json`` output."""
    text = data.decode() if isinstance(data, (bytes, bytearray)) else data
    return [RunRecord.from_dict(obj["record"]) for obj in json.loads(text)]
