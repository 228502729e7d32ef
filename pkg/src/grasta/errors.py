"""Exception types shared across the package."""


class GrastaError(Exception):
    """Base class for all errors raised by this package."""


class InputValidationError(GrastaError, ValueError):
    """An argument has the wrong shape, range or type."""


class DegeneracyError(GrastaError, ArithmeticError):
    """A numerical subproblem is singular or too ill-conditioned to solve.

    Trackers treat this as "skip the vector": the state is kept and the
    step counter still advances.
    """
