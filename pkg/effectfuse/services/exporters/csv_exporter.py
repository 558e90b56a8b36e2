from __future__ import annotations

from collections.abc import Mapping
from pathlib import Path
from typing import Any

import pandas as pd

from effectfuse.domain.interfaces import IExporter, IFileService
from effectfuse.services.exporters.base import header_line


class CsvExporter(IExporter):
    """DataFrame to CSV, preceded by a `# effectfuse ...` header comment."""

    name = "csv"
    label = "CSV table"
    file_ext = "csv"

    def __init__(self, files: IFileService, *, float_format: str = "%.10g") -> None:
        self._files = files
        self._float_format = float_format

    def export(self, payload: Any, out_path: Path, *, header: Mapping[str, Any]) -> None:
        frame = payload if isinstance(payload, pd.DataFrame) else pd.DataFrame(payload)
        body = frame.to_csv(index=False, float_format=self._float_format, lineterminator="\n")
        self._files.write_text_atomic(out_path, f"# {header_line(header)}\n{body}")


def read_csv_with_header(path: Path) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")
