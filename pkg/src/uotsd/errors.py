"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Raised when arguments violate a documented precondition."""


class NumericFailureError(ArithmeticError):
    """Raised when an evaluation produces a non-finite intermediate."""


class CapacityError(ValueError):
    """Raised when a dense operation is requested above its size limit."""
