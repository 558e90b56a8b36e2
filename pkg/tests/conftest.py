from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from effectfuse.domain.models import Dataset
from effectfuse.services.design import dataset_to_frame
from effectfuse.services.file_service import FileService
from effectfuse.services.pipeline import FusionFit, FusionSettings, RefitSettings, fit_effect_fusion
from effectfuse.services.prior import PriorSettings
from effectfuse.services.report_renderer import ReportRenderer
from effectfuse.services.sampler import SamplerConfig, make_rng
from effectfuse.services.simulation import CovariateSpec, SimDesign, simulate_dataset


# --- slow marker (Monte-Carlo acceptance checks) ---


def pytest_addoption(parser: pytest.Parser) -> None:
    parser.addoption(
        "--run-slow", action="store_true", default=False, help="run long Monte-Carlo checks"
    )


def pytest_configure(config: pytest.Config) -> None:
    config.addinivalue_line("markers", "slow: long Monte-Carlo checks (enable with --run-slow)")


def pytest_collection_modifyitems(config: pytest.Config, items: list[pytest.Item]) -> None:
    if config.getoption("--run-slow"):
        return
    skip = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


# --- Other common fixtures ---


@pytest.fixture()
def rng() -> np.random.Generator:
    return make_rng(12345)


@pytest.fixture()
def file_service() -> FileService:
    return FileService()


@pytest.fixture()
def renderer() -> ReportRenderer:
    return ReportRenderer()


@pytest.fixture(scope="session")
def toy_design() -> SimDesign:
    """Two small covariates with clear fusion structure; quick to sample."""
    return SimDesign(
        covariates=(
            CovariateSpec("a", (0.0, 0.0, 1.0, 1.0)),
            CovariateSpec("b", (0.0, 2.0)),
        ),
        n=400,
        replications=2,
        noise=0.1,
        n_new=200,
        nu_grid=(100.0,),
        psi_modes=("fixed",),
        seed=7,
        burn_in=200,
        iterations=400,
        refit=RefitSettings(iterations=300, burn_in=100),
    )


@pytest.fixture(scope="session")
def toy_data(toy_design: SimDesign) -> Dataset:
    return simulate_dataset(toy_design, toy_design.n, make_rng(99))


@pytest.fixture()
def toy_csv(tmp_path: Path, toy_data: Dataset) -> Path:
    path = tmp_path / "toy.csv"
    dataset_to_frame(toy_data, response="y").to_csv(path, index=False)
    return path


@pytest.fixture(scope="session")
def small_fit(toy_data: Dataset) -> FusionFit:
    """A short fusion run on the toy data, mixture parameters recorded."""
    settings = FusionSettings(
        prior=PriorSettings(nu=100.0),
        sampler=SamplerConfig(burn_in=100, iterations=200, seed=3, record_mixture_params=True),
        refit=RefitSettings(iterations=200, burn_in=50),
    )
    return fit_effect_fusion(toy_data, settings)
