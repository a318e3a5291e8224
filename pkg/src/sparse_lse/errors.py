"""Exception hierarchy shared by all solvers."""


class LseError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(LseError, ValueError):
    """Operand shapes do not conform."""


class RankDeficientError(LseError):
    """A factorization found a (numerically) zero pivot.

    ``index`` is the elimination step at which the deficiency showed up.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class NotPositiveDefiniteError(LseError):
    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class SingularFactorError(LseError):
    """Triangular factor with a zero on the diagonal."""


class BreakdownError(LseError):
    """Incomplete factorization kept failing after diagonal-shift restarts."""


class NonConvergenceError(LseError):
    """Iterative solve stopped without meeting its tolerance.

    The best iterate and the residual history are attached so callers can
    still report something useful.
    """

    def __init__(self, message, x=None, history=None):
        super().__init__(message)
        self.x = x
        self.history = history if history is not None else []


class NonUniqueSolutionError(LseError):
    """N(A) and N(C) intersect nontrivially."""


class MatrixMarketError(LseError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
