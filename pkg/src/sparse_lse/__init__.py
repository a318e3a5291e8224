"""Sparse solvers for least squares problems with linear equality constraints."""

from .augmented import (
    BlockPreconditioner,
    SaddleOperator,
    build_preconditioner,
    default_parameters,
    solve_lagrange,
    solve_qr_update,
    solve_reg_cholesky,
    solve_reg_krylov,
    solve_three_block,
    solve_weighted_normal,
)
from .elimination import select_pivots, solve_direct_elim, transform
from .errors import (
    BreakdownError,
    DimensionError,
    LseError,
    MatrixMarketError,
    NonConvergenceError,
    NonUniqueSolutionError,
    NotPositiveDefiniteError,
    RankDeficientError,
    SingularFactorError,
)
from .harness import (
    RunRecord,
    assemble_problem,
    dense_kkt_oracle,
    emit_report,
    generate_random_problem,
    parse_report,
    run_method,
)
from .mmio import read_matrix_market, write_matrix_market
from .nullspace import nullspace_basis, particular_solution, solve_nullspace
from .problem import LseProblem, SolveReport

__version__ = "0.1.0"

__all__ = [
    "BlockPreconditioner", "BreakdownError", "DimensionError", "LseError", "LseProblem",
    "MatrixMarketError", "NonConvergenceError", "NonUniqueSolutionError", "NotPositiveDefiniteError",
    "RankDeficientError", "RunRecord", "SaddleOperator", "SingularFactorError", "SolveReport",
    "assemble_problem", "build_preconditioner", "default_parameters", "dense_kkt_oracle",
    "emit_report", "generate_random_problem", "nullspace_basis", "parse_report", "particular_solution",
    "read_matrix_market", "run_method", "select_pivots", "solve_direct_elim", "solve_lagrange",
    "solve_nullspace", "solve_qr_update", "solve_reg_cholesky", "solve_reg_krylov",
    "solve_three_block", "solve_weighted_normal", "transform", "write_matrix_market",
]
