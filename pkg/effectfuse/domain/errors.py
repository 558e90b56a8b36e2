from __future__ import annotations

from collections.abc import Mapping
from typing import Any


class EffectFusionError(Exception):
    """Base error. `details` ends up verbatim in the CLI's error JSON."""

    exit_code: int = 1

    def __init__(self, message: str, *, details: Mapping[str, Any] | None = None) -> None:
        super().__init__(message)
        self.message = message
        self.details: dict[str, Any] = dict(details or {})

    def to_dict(self) -> dict[str, Any]:
        return {
            "error": type(self).__name__,
            "message": self.message,
            "exit_code": self.exit_code,
            "details": self.details,
        }


class ConfigurationError(EffectFusionError, ValueError):
    exit_code = 2


class DataValidationError(EffectFusionError, ValueError):
    exit_code = 2


class NumericalError(EffectFusionError, ArithmeticError):
    exit_code = 1


class SelectionError(EffectFusionError, ValueError):
    exit_code = 1
