"""Exporter strategies and registry."""

from .base import ExporterRegistryInst
from .csv_exporter import CsvExporter
from .html_exporter import HtmlExporter
from .json_exporter import JsonExporter
from .npz_exporter import NpzExporter

__all__ = ["CsvExporter", "ExporterRegistryInst", "HtmlExporter", "JsonExporter", "NpzExporter"]
