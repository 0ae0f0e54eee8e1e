"""Exception types shared across the package."""


class NumericalError(RuntimeError):
    """A numerical operation failed (singular system, lost definiteness, empty scan)."""


class NotPositiveDefiniteError(NumericalError):
    """A matrix or diagonal block that must be positive definite is not."""
