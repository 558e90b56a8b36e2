from __future__ import annotations

from collections.abc import Mapping
from pathlib import Path
from typing import Any

from effectfuse.domain.interfaces import IExporterRegistry, IFileService, IReportRenderer
from effectfuse.services.config.json_config_service import JsonConfigService
from effectfuse.services.exporters import (
    CsvExporter,
    ExporterRegistryInst,
    HtmlExporter,
    JsonExporter,
    NpzExporter,
)
from effectfuse.services.file_service import FileService
from effectfuse.services.output_writer import OutputWriter
from effectfuse.services.progress import LoggingProgress, NullProgress
from effectfuse.services.report_renderer import ReportRenderer


class Container:
    """
    Lightweight DI container.

    Owns one file service, one config reader and a per-instance exporter
    registry with the built-in formats (json, csv, html, npz).
    """

    def __init__(
        self,
        renderer: IReportRenderer | None = None,
        files: FileService | None = None,
        *,
        config: JsonConfigService | None = None,
        explicit_config: Path | None = None,
        project_root: Path | None = None,
    ) -> None:
        self.renderer: IReportRenderer = renderer or ReportRenderer()
        self.file_service: FileService = files or FileService()
        self.config: JsonConfigService = config or JsonConfigService(
            explicit_path=explicit_config, project_root=project_root
        )

        self.exporter_registry: IExporterRegistry = ExporterRegistryInst()
        self._ensure_builtin_exporters(self.exporter_registry, self.file_service)

    @staticmethod
    def default(*, explicit_config: Path | None = None) -> Container:
        return Container(explicit_config=explicit_config, project_root=Path.cwd())

    def _ensure_builtin_exporters(
        self, exporter_registry: IExporterRegistry, files: IFileService
    ) -> None:
        for factory in (JsonExporter, CsvExporter, HtmlExporter, NpzExporter):
            try:
                exporter_registry.get(factory.name)
            except KeyError:
                exporter_registry.register(factory(files))

    # ---------- factories ----------

    def build_output_writer(self, header: Mapping[str, Any]) -> OutputWriter:
        return OutputWriter(self.exporter_registry, self.renderer, header=header)

    def build_progress(self, *, quiet: bool = False, every: int = 1000):
        return NullProgress() if quiet else LoggingProgress(every=every)
