# app/core/errors.py
"""Error hierarchy; every error names the offending key and value"""

from typing import Any, Optional

from app.core.constants import EXIT_NUMERIC, EXIT_VALIDATION


class QuasiLabError(Exception):
    """Base error with the offending key/value and a process exit code"""

    exit_code = EXIT_VALIDATION

    def __init__(self, message: str, key: Optional[str] = None, value: Any = None):
        super().__init__(message)
        self.message = message
        self.key = key
        self.value = value

    @property
    def code(self) -> str:
        return type(self).__name__

    def to_dict(self) -> dict:
        return {
            "error": self.code,
            "message": self.message,
            "key": self.key,
            "value": None if self.value is None else str(self.value),
            "exit_code": self.exit_code,
        }

    def __str__(self) -> str:
        if self.key is None:
            return f"{self.code}: {self.message}"
        return f"{self.code}: {self.message} ({self.key}={self.value})"


class ValidationFailure(QuasiLabError):
    exit_code = EXIT_VALIDATION


class NumericFailure(QuasiLabError):
    exit_code = EXIT_NUMERIC


# Validation errors

class ConfigError(ValidationFailure):
    pass


class RationalInput(ValidationFailure):
    def __init__(self, message: str, partial_quotients: tuple = (), **kwargs):
        super().__init__(message, **kwargs)
        self.partial_quotients = tuple(partial_quotients)


class DepthInsufficient(ValidationFailure):
    pass


class StripExceeded(ValidationFailure):
    pass


class LambdaZero(ValidationFailure):
    pass


class WindowTooSmall(ValidationFailure):
    pass


class SelectionViolated(ValidationFailure):
    pass


class SupportTooWide(ValidationFailure):
    pass


class BoundaryInput(ValidationFailure):
    pass


# Numeric errors

class PrecisionExhausted(NumericFailure):
    def __init__(self, message: str, deepest_safe_depth: int = 0, **kwargs):
        super().__init__(message, **kwargs)
        self.deepest_safe_depth = deepest_safe_depth

    def to_dict(self) -> dict:
        data = super().to_dict()
        data["deepest_safe_depth"] = self.deepest_safe_depth
        return data


class NoConvergence(NumericFailure):
    pass


class SingularBlock(NumericFailure):
    pass


class Degenerate(NumericFailure):
    pass


class TruncationTooSmall(NumericFailure):
    pass


class DivisorBelowFloor(NumericFailure):
    pass


class SingularConjugacy(NumericFailure):
    pass


class AtomCollision(NumericFailure):
    pass


class OutputMismatch(NumericFailure):
    """Rows produced by a stage disagree with the grid it declared"""
