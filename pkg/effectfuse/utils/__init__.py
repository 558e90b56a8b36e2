"""Defaults and shared names."""

from .constants import (
    APP_NAME,
    DEFAULT_B0,
    DEFAULT_E0,
    DEFAULT_G0,
    DEFAULT_NU,
    ENV_THREADS,
)

__all__ = [
    "APP_NAME",
    "DEFAULT_B0",
    "DEFAULT_E0",
    "DEFAULT_G0",
    "DEFAULT_NU",
    "ENV_THREADS",
]
