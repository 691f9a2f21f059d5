"""Exception and warning types raised across the package."""


class InvalidInputError(ValueError):
    """Input violates a precondition (shape, finiteness, range)."""


class DegenerateGeometryError(ValueError):
    """Points are affinely dependent where independence is required."""

    def __init__(self, message, found=None):
        super().__init__(message)
        self.found = found


class NumericalFailureError(ArithmeticError):
    """A solver produced NaN or Inf."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class CSVParseError(ValueError):
    """Malformed matrix file."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class ConvergenceWarning(UserWarning):
    """An iterative sub-solver stopped before reaching its tolerance."""
