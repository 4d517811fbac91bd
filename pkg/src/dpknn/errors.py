"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised for malformed input: bad values, shapes, columns or config."""


class UndefinedMetricError(ValidationError):
    """Raised when a metric is undefined for the given labels."""


class BudgetExceededError(RuntimeError):
    """Raised when a brute-force computation would exceed its size budget."""
