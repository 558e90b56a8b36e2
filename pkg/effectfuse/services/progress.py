from __future__ import annotations

import logging

from effectfuse.domain.interfaces import IProgress

logger = logging.getLogger(__name__)


class NullProgress(IProgress):
    """Swallows all progress (quiet mode, CI)."""

    def set_status(self, text: str) -> None:
        pass

    def set_progress(self, *, value: int | None = None, maximum: int | None = None) -> None:
        pass


class LoggingProgress(IProgress):
    """
    Logs status lines and every `every`-th progress step (plus the last one).
    `maximum=None` means indeterminate.
    """

    def __init__(self, *, every: int = 1000, log: logging.Logger | None = None) -> None:
        if every < 1:
            raise ValueError("every must be >= 1")
        self._every = every
        self._log = log or logger
        self._maximum: int | None = None
        self._status = ""

    def set_status(self, text: str) -> None:
        self._status = text
        self._log.info("%s", text)

    def set_progress(self, *, value: int | None = None, maximum: int | None = None) -> None:
        if maximum is not None:
            self._maximum = maximum
        if value is None or value == 0:
            return
        if value % self._every == 0 or value == self._maximum:
            if self._maximum:
                self._log.info("%s: %d/%d", self._status or "progress", value, self._maximum)
            else:
                self._log.info("%s: %d", self._status or "progress", value)
