from __future__ import annotations

import json
import math
from collections.abc import Mapping
from pathlib import Path
from typing import Any

import numpy as np

from effectfuse.domain.interfaces import IExporter, IFileService


def to_builtin(obj: Any) -> Any:
    """numpy scalars/arrays to plain Python; non-finite floats to None."""
    if isinstance(obj, Mapping):
        return {str(k): to_builtin(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_builtin(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_builtin(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, Path):
        return str(obj)
    return obj


class JsonExporter(IExporter):
    name = "json"
    label = "JSON document"
    file_ext = "json"

    def __init__(self, files: IFileService) -> None:
        self._files = files

    def export(self, payload: Any, out_path: Path, *, header: Mapping[str, Any]) -> None:
        doc = {"meta": dict(header), **dict(payload)}
        text = json.dumps(to_builtin(doc), indent=2, allow_nan=False)
        self._files.write_text_atomic(out_path, text + "\n")
