"""Exception hierarchy shared by all modules."""


class DrBaselineError(Exception):
    pass


class ParameterError(DrBaselineError, ValueError):
    """Invalid program or model parameter (X out of range, parity mismatch, ...)."""


class DomainError(DrBaselineError, ValueError):
    """Argument outside the domain of a function (negative action, a > a_hat, ...)."""


class DataError(DrBaselineError, ValueError):
    """Malformed or unusable input data."""


class NumericError(DrBaselineError, ArithmeticError):
    """A numerical procedure failed to bracket or converge."""


class CapacityError(DrBaselineError, MemoryError):
    """Requested computation exceeds the configured memory budget."""
