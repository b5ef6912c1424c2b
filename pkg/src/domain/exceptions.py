"""Domain exceptions."""
from __future__ import annotations

from typing import Optional


class DomainException(Exception):
    """Base domain exception."""

    exit_code: int = 1

    def __init__(self, message: str, code: Optional[str] = None) -> None:
        """Initialize domain exception."""
        super().__init__(message)
        self.code = code or self.__class__.__name__


class ConfigError(DomainException):
    """Invalid configuration or operation parameters."""

    exit_code = 2

    def __init__(self, reason: str) -> None:
        """Initialize exception."""
        super().__init__(f"Invalid configuration: {reason}", "CONFIG_ERROR")


class DataError(DomainException):
    """Malformed or inconsistent input data."""

    exit_code = 3

    def __init__(
        self,
        reason: str,
        line: Optional[int] = None,
        field: Optional[str] = None,
    ) -> None:
        """Initialize exception."""
        location = ""
        if line is not None:
            location = f" (line {line}"
            location += f", field {field!r})" if field else ")"
        elif field:
            location = f" (field {field!r})"
        super().__init__(f"Invalid data: {reason}{location}", "DATA_ERROR")
        self.line = line
        self.field = field


class NumericalError(DomainException):
    """Numerical failure: non-finite values, non-convergence."""

    exit_code = 4

    def __init__(self, reason: str, code: str = "NUMERICAL_ERROR") -> None:
        """Initialize exception."""
        super().__init__(f"Numerical failure: {reason}", code)


class ShapeError(NumericalError):
    """Array dimensions do not chain or match."""

    def __init__(self, reason: str) -> None:
        """Initialize exception."""
        super().__init__(f"shape mismatch: {reason}", "SHAPE_MISMATCH")


class ContractError(DomainException):
    """Input violates an operation's contract."""

    exit_code = 4

    def __init__(self, reason: str) -> None:
        """Initialize exception."""
        super().__init__(f"Contract violated: {reason}", "CONTRACT_VIOLATION")


class UsageError(DomainException):
    """API used out of order, e.g. backward without a forward cache."""

    exit_code = 4

    def __init__(self, reason: str) -> None:
        """Initialize exception."""
        super().__init__(f"Usage error: {reason}", "USAGE_ERROR")


class PipelineError(DomainException):
    """A pipeline stage failed."""

    def __init__(self, stage: str, cause: Exception | str) -> None:
        """Initialize exception."""
        super().__init__(f"Stage {stage!r} failed: {cause}", "PIPELINE_ERROR")
        self.stage = stage
        self.cause = cause
        if isinstance(cause, DomainException):
            self.exit_code = cause.exit_code
