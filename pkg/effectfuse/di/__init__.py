"""Simple dependency injection wiring for the command-line tool."""

from .container import Container

__all__ = ["Container"]
