class DataError(ValueError):
    """Malformed or unusable survival data."""


class DegenerateVarianceError(ArithmeticError):
    """The null variance of a statistic is zero or not finite."""
