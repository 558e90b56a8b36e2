"""Layered JSON configuration and the resolved run settings built from it."""

from .json_config_service import JsonConfigService
from .run_config import (
    CliOverrides,
    RunConfig,
    SimulateConfig,
    build_run_config,
    build_simulate_config,
    worker_count,
)

__all__ = [
    "CliOverrides",
    "JsonConfigService",
    "RunConfig",
    "SimulateConfig",
    "build_run_config",
    "build_simulate_config",
    "worker_count",
]
