"""Exception types shared across the package."""


class RomlError(Exception):
    """Base class for package-specific errors."""


class NumericalError(RomlError):
    """A numerical routine failed or produced non-finite values."""

    def __init__(self, message, iteration=None):
        if iteration is not None:
            message = "%s (iteration %d)" % (message, iteration)
        super().__init__(message)
        self.iteration = iteration


class InfeasibleError(RomlError, ValueError):
    """The problem constraints cannot be satisfied."""


class OversizeError(RomlError, ValueError):
    """An instance exceeds a brute-force enumeration guard."""
