from __future__ import annotations

import json
from collections.abc import Mapping
from typing import Any

from effectfuse.domain.interfaces import IExporter, IExporterRegistry
from effectfuse.services.exporters.json_exporter import to_builtin
from effectfuse.utils.constants import APP_NAME


class ExporterRegistryInst(IExporterRegistry):
    """
    Per-instance exporter registry for tests and DI.
    `ExporterRegistryInst()` is a fresh, empty registry.
    """

    def __init__(self) -> None:
        self._registry: dict[str, IExporter] = {}

    def register(self, e: IExporter) -> None:
        self._registry[e.name] = e

    def get(self, name: str) -> IExporter:
        return self._registry[name]

    def all(self) -> list[IExporter]:
        return list(self._registry.values())


def compact_json(value: Any) -> str:
    return json.dumps(to_builtin(value), separators=(",", ":"), sort_keys=True)


def header_line(header: Mapping[str, Any]) -> str:
    """One-line reproducibility header for tabular files (without the comment marker)."""
    return (
        f"{APP_NAME} {header.get('version', '')} seed={header.get('seed')} "
        f"config={compact_json(header.get('config', {}))}"
    )
