from __future__ import annotations

from collections.abc import Mapping
from pathlib import Path
from typing import Any

from effectfuse.domain.interfaces import IExporter, IFileService
from effectfuse.services.exporters.base import header_line


class HtmlExporter(IExporter):
    name = "html"
    label = "HTML report"
    file_ext = "html"

    def __init__(self, files: IFileService) -> None:
        self._files = files

    def export(self, payload: Any, out_path: Path, *, header: Mapping[str, Any]) -> None:
        html = str(payload)
        comment = "<!-- " + header_line(header).replace("--", "- -") + " -->\n"
        self._files.write_text_atomic(out_path, comment + html)
