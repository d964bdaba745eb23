"""Error hierarchy shared by all optimization modules."""
from typing import Iterable, List


class OptimizationError(Exception):
    """Base class for every error raised by this package."""


class RejectedInputError(OptimizationError, ValueError):
    """An operation was called with arguments violating its precondition."""


class UnknownIdentifierError(RejectedInputError):
    """A function or algorithm identifier is not registered."""

    def __init__(self, kind: str, identifier: str, valid: Iterable[str]):
        self.kind = kind
        self.identifier = identifier
        self.valid: List[str] = sorted(valid)
        super().__init__(
            f"unknown {kind} '{identifier}'; valid ids: {', '.join(self.valid)}"
        )


class NumericalFailure(OptimizationError, ArithmeticError):
    """A numerical procedure failed even after repair."""
