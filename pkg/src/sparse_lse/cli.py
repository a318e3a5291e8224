"""Command line entry point ``lse``.

Exit codes: 0 success, 2 method non-convergence, 1 usage, parse or
method errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import harness
from .errors import LseError
from .mmio import read_matrix_market


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="lse", description="Sparse equality-constrained least squares solvers.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="assemble a problem and run one or more methods")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--matrix", help="Matrix Market file to split into A and C")
    src.add_argument("--problem", help="problem file written by 'lse gen'")
    s.add_argument("--transpose", choices=("auto", "never", "always"), default="auto")
    s.add_argument("--mode", choices=("density", "densest"), default="density")
    s.add_argument("--density", type=float, default=0.05, help="dense-row threshold for --mode density")
    s.add_argument("--remove", type=int, default=20, help="rows removed in --mode densest")
    s.add_argument("--keep", type=int, default=None, help="removed rows kept as constraints")
    s.add_argument("--method", action="append", required=True,
                   help=f"method tag, repeatable or 'all' ({', '.join(harness.METHOD_TAGS)})")
    s.add_argument("--theta", type=float)
    s.add_argument("--tau", type=float)
    s.add_argument("--omega", type=float, action="append",
                   help="regularization parameter; repeat for a sweep")
    s.add_argument("--gamma", type=float)
    s.add_argument("--tol", type=float)
    s.add_argument("--maxit", type=int)
    s.add_argument("--quality", choices=("complete", "incomplete"))
    s.add_argument("--id", dest="ident", default=None, help="problem identifier used in the report")
    s.add_argument("--out", default="-", help="report path ('-' for stdout)")
    s.add_argument("--format", choices=("json", "csv", "table"), default="json")

    g = sub.add_parser("gen", help="write a random test problem")
    g.add_argument("--m", type=int, required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--p", type=int, required=True)
    g.add_argument("--density", type=float, default=0.05)
    g.add_argument("--cond", type=float, default=1e6, help="upper bound on cond(A)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="output .npz path")

    o = sub.add_parser("oracle", help="dense reference solution of a problem file")
    o.add_argument("--problem", required=True)
    o.add_argument("--out", default="-")
    return ap


def _write(out: str, data: bytes) -> None:
    if out == "-":
        sys.stdout.write(data.decode())
    else:
        with open(out, "wb") as fh:
            fh.write(data)


def _cmd_solve(args) -> int:
    if args.matrix:
        M = read_matrix_market(args.matrix)
        ident = args.ident or os.path.splitext(os.path.basename(args.matrix))[0]
        prob = harness.assemble_problem(M, mode=args.mode, density=args.density, remove=args.remove,
                                        keep=args.keep, transpose=args.transpose, ident=ident,
                                        provenance=args.matrix)
    else:
        prob = harness.load_problem(args.problem)
        if args.ident:
            prob = dataclasses.replace(prob, ident=args.ident)
    methods = []
    for tag in args.method:
        methods.extend(harness.METHOD_TAGS if tag == "all" else [tag])
    bad = [t for t in methods if t not in harness.METHOD_TAGS]
    if bad:
        raise ValueError(f"unknown method {bad[0]!r}; valid tags: {', '.join(harness.METHOD_TAGS)}")
    base = {"theta": args.theta, "tau": args.tau, "gamma": args.gamma, "tol": args.tol,
            "maxit": args.maxit, "quality": args.quality}
    omegas = args.omega or [None]
    records = []
    for tag in methods:
        for w in (omegas if tag.startswith("reg-") else [None]):
            records.append(harness.run_method(prob, tag, dict(base, omega=w)))
    _write(args.out, harness.emit_report(records, args.format))
    for rec in records:
        if rec.status != "ok":
            print(f"lse: {rec.method}: {rec.status}: {rec.message}", file=sys.stderr)
    if any(rec.status == "error" for rec in records):
        return 1
    if any(rec.status == "nonconvergence" for rec in records):
        return 2
    return 0


def _cmd_gen(args) -> int:
    prob = harness.generate_random_problem(args.m, args.n, args.p, args.density, args.cond, args.seed)
    harness.save_problem(args.out, prob)
    return 0


def _cmd_oracle(args) -> int:
    prob = harness.load_problem(args.problem)
    x, lam = harness.dense_kkt_oracle(prob)
    out = {"identifier": prob.ident, "x": x.tolist(), "lambda": lam.tolist(),
           "norm_x": float(np.linalg.norm(x)), "norm_r": float(np.linalg.norm(prob.residual(x))),
           "norm_rc": float(np.linalg.norm(prob.constraint_residual(x)))}
    _write(args.out, (json.dumps(out) + "\n").encode())
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handler = {"solve": _cmd_solve, "gen": _cmd_gen, "oracle": _cmd_oracle}[args.command]
    try:
        return handler(args)
    except (LseError, ValueError, OSError) as exc:
        print(f"lse: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
