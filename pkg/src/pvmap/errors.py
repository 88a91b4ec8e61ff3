"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array shape or dimension mismatch."""


class ValidationError(ValueError):
    """Invalid input data or on-disk artifact."""


class NumericalError(ArithmeticError):
    """Non-finite values where finite ones are required (e.g. diverged loss)."""
