from __future__ import annotations

import io
from collections.abc import Mapping
from pathlib import Path
from typing import Any

import numpy as np

from effectfuse.domain.interfaces import IExporter, IFileService
from effectfuse.services.exporters.base import header_line


class NpzExporter(IExporter):
    """Named arrays to a compressed .npz; the header is stored as the `meta` entry."""

    name = "npz"
    label = "Compressed numpy archive"
    file_ext = "npz"

    def __init__(self, files: IFileService) -> None:
        self._files = files

    def export(self, payload: Any, out_path: Path, *, header: Mapping[str, Any]) -> None:
        arrays = {str(k): np.asarray(v) for k, v in dict(payload).items()}
        buf = io.BytesIO()
        np.savez_compressed(buf, meta=np.array(header_line(header)), **arrays)
        self._files.write_bytes_atomic(out_path, buf.getvalue())
