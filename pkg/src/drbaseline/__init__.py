"""Baseline manipulation in average-baseline demand-response programs."""

from drbaseline.errors import (
    CapacityError,
    DataError,
    DomainError,
    NumericError,
    ParameterError,
)

__version__ = "0.1.0"

__all__ = [
    "CapacityError",
    "DataError",
    "DomainError",
    "NumericError",
    "ParameterError",
    "__version__",
]
