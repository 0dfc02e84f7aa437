from __future__ import annotations

from typing import Any, Optional


class CompilerError(Exception):
    """Base class for every error raised by the compiler."""


class DimensionError(CompilerError, ValueError):
    """Raised when tensor extents, chain lengths or qubit counts do not match."""


class NumericalError(CompilerError, ArithmeticError):
    """Raised when a decomposition fails or produces non-finite data."""


class GateValidationError(CompilerError, ValueError):
    """Raised when a gate is not unitary within tolerance."""


class ModelConfigError(CompilerError, ValueError):
    """Raised when a model, graph or run configuration is invalid."""


class CapacityError(CompilerError, RuntimeError):
    """Raised when the bond-dimension budget is exhausted.

    ``last_cost`` is the last cost measured before giving up and ``partial``
    carries whatever partial result the caller may still want to use.
    """

    def __init__(self, message: str, *, last_cost: float = float("nan"), partial: Optional[Any] = None):
        super().__init__(message)
        self.last_cost = last_cost
        self.partial = partial


class CacheStateError(CompilerError, RuntimeError):
    """Raised when an environment cache is asked for a layer it is not synchronized to."""


class UsageError(CompilerError, RuntimeError):
    """Raised when an operation is called in a state where it is not defined."""


class ArtifactError(CompilerError, OSError):
    """Raised when an artifact file is missing or cannot be decoded."""
