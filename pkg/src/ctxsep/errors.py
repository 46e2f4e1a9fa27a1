"""Exception types raised across the package."""


class CtxSepError(Exception):
    """Base class for every error raised by ctxsep."""


class DimensionMismatch(CtxSepError, ValueError):
    pass


class NonFinite(CtxSepError, ValueError):
    pass


class EmptyProblem(CtxSepError, ValueError):
    pass


class InfeasibleProblem(CtxSepError, ValueError):
    """The sum constraint cannot be met together with nonnegativity."""


class IndivisibleWindow(CtxSepError, ValueError):
    pass


class NonHourly(CtxSepError, ValueError):
    pass


class SingularDesign(CtxSepError, ValueError):
    """Raised when the stacked feature matrix is (numerically) rank deficient.

    ``direction`` holds a unit vector spanning the near null space of X.
    """

    def __init__(self, message, direction=None, condition=None):
        super().__init__(message)
        self.direction = direction
        self.condition = condition


class NumericalBreakdown(CtxSepError, ArithmeticError):
    pass


class DomainError(CtxSepError, ValueError):
    pass


class DeltaOutOfRange(UserWarning):
    """Confidence level outside the range where the closed-form bound holds."""


class ParseError(CtxSepError, ValueError):
    def __init__(self, message, row=None, column=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.row = row
        self.column = column


class NonMonotoneTimestamps(CtxSepError, ValueError):
    pass


class NegativeUsage(CtxSepError, ValueError):
    pass


class NoOverlap(CtxSepError, ValueError):
    pass
