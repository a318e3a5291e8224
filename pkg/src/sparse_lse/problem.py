"""Problem and result containers shared by every method."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError
from .sparse import ScalingInfo, as_csc, check_finite


@dataclass(frozen=True)
class LseProblem:
    """``min ||A x - b||  subject to  C x = d``.

    ``scaling`` records the column scaling already folded into ``A`` and
    ``C``; solutions are reported for the scaled problem.  ``meta`` holds
    ingestion details (dropped columns, removed rows, transposition).
    """

    A: sp.csc_matrix
    C: sp.csc_matrix
    b: np.ndarray
    d: np.ndarray
    scaling: ScalingInfo | None = None
    provenance: str = ""
    ident: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        A = as_csc(self.A)
        C = as_csc(self.C) if self.C is not None else sp.csc_matrix((0, A.shape[1]))
        b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        d = np.asarray(self.d, dtype=np.float64).reshape(-1)
        m, n = A.shape
        if C.shape[1] != n:
            raise DimensionError(f"C has {C.shape[1]} columns, A has {n}")
        if b.shape[0] != m or d.shape[0] != C.shape[0]:
            raise DimensionError("right-hand side lengths do not match A and C")
        if not n > C.shape[0]:
            raise DimensionError(f"need n > p, got n={n}, p={C.shape[0]}")
        if m < n:
            raise DimensionError(f"need m >= n, got m={m}, n={n}")
        check_finite(b, d, A.data, C.data)
        scaling = self.scaling if self.scaling is not None else ScalingInfo.identity(n)
        for name, val in (("A", A), ("C", C), ("b", b), ("d", d), ("scaling", scaling)):
            object.__setattr__(self, name, val)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    def extended(self) -> sp.csc_matrix:
        return as_csc(sp.vstack([self.A, self.C]))

    def residual(self, x) -> np.ndarray:
        return self.b - self.A @ x

    def constraint_residual(self, x) -> np.ndarray:
        return self.d - self.C @ x


@dataclass
class SolveReport:
    """Solution plus diagnostics.

    ``norm_r`` and ``norm_rc`` are always recomputed from ``x``; solvers
    never fill them from by-products.  ``aux`` carries method-specific
    extras (multiplier estimate, ``ndense``, density of the reduced matrix...).
    """

    x: np.ndarray
    norm_x: float
    norm_r: float
    norm_rc: float
    iters: int = 0
    method_tag: str = ""
    aux: dict = field(default_factory=dict)

    @classmethod
    def from_solution(cls, prob: LseProblem, x, method_tag: str, iters: int = 0, **aux) -> "SolveReport":
        x = np.asarray(x, dtype=np.float64)
        return cls(
            x=x,
            norm_x=float(np.linalg.norm(x)),
            norm_r=float(np.linalg.norm(prob.residual(x))),
            norm_rc=float(np.linalg.norm(prob.constraint_residual(x))),
            iters=int(iters),
            method_tag=method_tag,
            aux=aux,
        )

    @property
    def multiplier(self):
        return self.aux.get("lambda")
