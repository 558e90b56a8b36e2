"""Concrete service implementations and export strategies."""

from .file_service import FileService
from .progress import LoggingProgress, NullProgress
from .report_renderer import ReportRenderer

__all__ = ["FileService", "LoggingProgress", "NullProgress", "ReportRenderer"]
