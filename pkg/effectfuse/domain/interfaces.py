from __future__ import annotations

from abc import ABC, abstractmethod
from collections.abc import Mapping, Sequence
from pathlib import Path
from typing import Any, Protocol


class IFileService(Protocol):
    """Read/write files. Writes should be atomic when possible."""

    def read_text(self, path: Path) -> str: ...

    def write_text_atomic(self, path: Path, text: str) -> None: ...

    def write_bytes_atomic(self, path: Path, data: bytes) -> None: ...


class IReportRenderer(Protocol):
    """Convert a Markdown report to a full HTML document (including CSS)."""

    def to_html(self, markdown_text: str, *, title: str = "") -> str: ...


class IProgress(Protocol):
    """Progress sink for long-running sampler and study loops."""

    def set_status(self, text: str) -> None: ...

    def set_progress(self, *, value: int | None = None, maximum: int | None = None) -> None: ...


class IExporter(ABC):
    """Export strategy interface. Implementations serialise one payload kind to a path."""

    name: str  # e.g. "json", "csv"
    file_ext: str

    @abstractmethod
    def export(self, payload: Any, out_path: Path, *, header: Mapping[str, Any]) -> None:
        """Write `payload` to `out_path`. `header` is the reproducibility metadata."""
        raise NotImplementedError


class IExporterRegistry(ABC):
    @abstractmethod
    def all(self) -> list[IExporter]: ...

    @abstractmethod
    def get(self, name: str) -> IExporter: ...

    @abstractmethod
    def register(self, e: IExporter) -> None: ...


class IConfigService(Protocol):
    """Read-only layered configuration (JSON documents)."""

    def get(self, section: str, key: str, default: Any = None) -> Any:
        """Return the raw value or default (no side-effects)."""

    def get_int(self, section: str, key: str, default: int | None = None) -> int | None: ...

    def get_float(self, section: str, key: str, default: float | None = None) -> float | None: ...

    def get_bool(self, section: str, key: str, default: bool | None = None) -> bool | None: ...

    def get_list(
        self, section: str, key: str, default: Sequence[Any] | None = None
    ) -> list[Any] | None: ...

    def as_dict(self) -> Mapping[str, Mapping[str, Any]]:
        """A copy of the current config map (for the reproducibility header)."""

    @property
    def loaded_from(self) -> Path | None: ...
