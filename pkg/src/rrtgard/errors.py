"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class CapacityError(ValueError):
    """A combinatorial routine was asked to enumerate too much."""


class RankDeficientError(ArithmeticError):
    """A matrix that must have full column rank does not."""

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class ConvergenceError(RuntimeError):
    """An iterative routine hit its iteration cap.

    ``best`` carries the best iterate found so far so callers can decide
    whether it is usable.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
