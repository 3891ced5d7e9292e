"""Exception types raised across the package."""

from __future__ import annotations


class PriorGPError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(PriorGPError, ValueError):
    pass


class NumericalIndefinitenessError(PriorGPError, ArithmeticError):
    """Cholesky factorization failed even after the last jitter level."""

    def __init__(self, message: str, jitter: float):
        super().__init__(f"{message} (final jitter {jitter:.3g})")
        self.jitter = jitter


class DomainError(PriorGPError, ValueError):
    pass


class QuadratureError(PriorGPError, ArithmeticError):
    pass


class IllConditionedBasisError(PriorGPError, ValueError):
    def __init__(self, message: str, pair: tuple[int, int] | None = None):
        super().__init__(message)
        self.pair = pair


class InsufficientTrajectoriesError(PriorGPError, ValueError):
    pass


class TrajectoryError(PriorGPError):
    """Wraps a failure while processing one trajectory, keeping its id."""

    def __init__(self, trajectory_id: str, cause: Exception):
        super().__init__(f"trajectory {trajectory_id!r}: {cause}")
        self.trajectory_id = trajectory_id
        self.cause = cause


class TrainingFailedError(PriorGPError, RuntimeError):
    def __init__(self, message: str, diagnostics: list | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or []


class OrderSelectionError(PriorGPError, ValueError):
    pass


class ParseError(PriorGPError, ValueError):
    def __init__(self, message: str, row: int | None = None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class SchemaError(PriorGPError, ValueError):
    pass


class InvalidSpecError(PriorGPError, ValueError):
    pass


class PredictionError(PriorGPError):
    def __init__(self, step: int, cause: Exception):
        super().__init__(f"prediction step {step}: {cause}")
        self.step = step
        self.cause = cause
