# tests/test_container.py
from __future__ import annotations

from pathlib import Path

from effectfuse.di.container import Container
from effectfuse.services.config.json_config_service import JsonConfigService
from effectfuse.services.output_writer import OutputWriter
from effectfuse.services.progress import LoggingProgress, NullProgress


def _container(tmp_path: Path) -> Container:
    return Container(config=JsonConfigService(project_root=tmp_path / "none"))


def test_container_wires_services_and_exporters(tmp_path: Path):
    c = _container(tmp_path)

    assert c.renderer is not None
    assert c.file_service is not None
    assert c.config is not None

    names = {e.name for e in c.exporter_registry.all()}
    assert names == {"json", "csv", "html", "npz"}


def test_container_keeps_preregistered_exporters(tmp_path: Path):
    first = _container(tmp_path)
    json_exporter = first.exporter_registry.get("json")
    first._ensure_builtin_exporters(first.exporter_registry, first.file_service)
    assert first.exporter_registry.get("json") is json_exporter
    assert len(first.exporter_registry.all()) == 4


def test_container_builds_output_writer(tmp_path: Path):
    writer = _container(tmp_path).build_output_writer({"version": "x", "seed": 1, "config": {}})
    assert isinstance(writer, OutputWriter)


def test_container_builds_progress(tmp_path: Path):
    c = _container(tmp_path)
    assert isinstance(c.build_progress(quiet=True), NullProgress)
    assert isinstance(c.build_progress(every=5), LoggingProgress)


def test_container_default_reads_explicit_config(tmp_path: Path):
    path = tmp_path / "cfg.json"
    path.write_text('{"prior": {"nu": 10}}', encoding="utf-8")
    c = Container.default(explicit_config=path)
    assert c.config.loaded_from == path
    assert c.config.get("prior", "nu") == 10
