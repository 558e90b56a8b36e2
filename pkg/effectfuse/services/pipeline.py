from __future__ import annotations

import logging
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from effectfuse.domain.errors import ConfigurationError
from effectfuse.domain.interfaces import IProgress
from effectfuse.domain.models import CoefficientVector, Dataset, DesignMatrix, LevelPartition
from effectfuse.services.design import build_design, unflatten
from effectfuse.services.partitions import (
    CoclusterAccumulator,
    MostFrequentResult,
    PamSelection,
    accumulate_cocluster,
    group_count_distribution,
    most_frequent_partition,
    select_by_pam,
)
from effectfuse.services.prior import (
    GlobalPriorSpec,
    PriorSettings,
    build_prior,
    flat_fit_vector,
    residual_variance,
)
from effectfuse.services.refit import (
    FusedDesign,
    ModelFitSummary,
    block_members,
    build_fused_design,
    expand_fused,
    model_averaged_estimates,
    refit_flat,
    summarize_fit,
)
from effectfuse.services.sampler import McmcTrace, SamplerConfig, derive_seed, run_mcmc
from effectfuse.utils.constants import (
    DEFAULT_B0,
    DEFAULT_REFIT_BURN_IN,
    DEFAULT_REFIT_ITERATIONS,
    STRATEGIES,
)

logger = logging.getLogger(__name__)

# Seed stream keys below the sampler seed.
_REFIT_STREAM = 1
_FULL_STREAM = 2


@dataclass(frozen=True)
class RefitSettings:
    B0: float = DEFAULT_B0
    iterations: int = DEFAULT_REFIT_ITERATIONS
    burn_in: int = DEFAULT_REFIT_BURN_IN


@dataclass(frozen=True)
class FusionSettings:
    prior: PriorSettings = field(default_factory=PriorSettings)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    refit: RefitSettings = field(default_factory=RefitSettings)
    strategies: tuple[str, ...] = STRATEGIES
    k_max: int | None = None
    include_full_model: bool = True

    def __post_init__(self) -> None:
        unknown = [s for s in self.strategies if s not in STRATEGIES]
        if unknown or not self.strategies:
            raise ConfigurationError(
                f"strategies must be drawn from {list(STRATEGIES)}, got {list(self.strategies)}",
                details={"strategies": list(self.strategies)},
            )


@dataclass(frozen=True, eq=False)
class SelectedModel:
    """A partition choice refitted under the flat prior."""

    strategy: str
    partitions: Mapping[str, LevelPartition]
    fused: FusedDesign
    trace: McmcTrace
    summary: ModelFitSummary
    estimates: CoefficientVector


@dataclass(frozen=True, eq=False)
class FullModelFit:
    trace: McmcTrace
    summary: ModelFitSummary


@dataclass(frozen=True, eq=False)
class FusionFit:
    data: Dataset
    design: DesignMatrix
    beta_hat: np.ndarray
    prior: GlobalPriorSpec
    trace: McmcTrace
    cocluster: Mapping[str, CoclusterAccumulator]
    group_counts: Mapping[str, dict[int, int]]
    most: Mapping[str, MostFrequentResult]
    pam: Mapping[str, PamSelection]
    models: Mapping[str, SelectedModel]
    averaged: CoefficientVector
    full: FullModelFit | None = None

    @property
    def flat_estimates(self) -> CoefficientVector:
        return unflatten(self.beta_hat, self.design.column_map)

    def element_labels(self) -> dict[str, tuple[str, ...]]:
        return {c.name: c.partition_labels() for c in self.data.categorical}


def select_partitions(
    trace: McmcTrace,
    cocluster: Mapping[str, CoclusterAccumulator],
    strategies: tuple[str, ...],
    k_max: int | None = None,
) -> tuple[dict[str, MostFrequentResult], dict[str, PamSelection]]:
    most: dict[str, MostFrequentResult] = {}
    pam: dict[str, PamSelection] = {}
    for name, S in trace.allocations.items():
        if "most" in strategies:
            most[name] = most_frequent_partition(name, S)
        if "pam" in strategies:
            n = cocluster[name].n_elements
            k = None if k_max is None else min(k_max, n)
            pam[name] = select_by_pam(name, cocluster[name].similarity(), k)
    return most, pam


def refit_partitions(
    design: DesignMatrix,
    y: np.ndarray,
    partitions: Mapping[str, LevelPartition],
    *,
    strategy: str,
    refit: RefitSettings,
    seed: int,
    element_labels: Mapping[str, tuple[str, ...]],
) -> SelectedModel:
    fused = build_fused_design(design, partitions)
    trace = refit_flat(
        fused,
        y,
        B0=refit.B0,
        iterations=refit.iterations,
        burn_in=refit.burn_in,
        seed=seed,
    )
    summary = summarize_fit(
        trace,
        fused.design,
        y,
        group_counts=fused.group_counts(),
        members=block_members(fused, element_labels),
    )
    return SelectedModel(
        strategy=strategy,
        partitions=dict(partitions),
        fused=fused,
        trace=trace,
        summary=summary,
        estimates=expand_fused(fused, trace.beta.mean(axis=0)),
    )


def fit_full_model(
    design: DesignMatrix, y: np.ndarray, *, refit: RefitSettings, seed: int
) -> FullModelFit:
    trace = refit_flat(
        design, y, B0=refit.B0, iterations=refit.iterations, burn_in=refit.burn_in, seed=seed
    )
    counts = {}
    for name in design.covariate_names():
        sl = design.covariate_slice(name)
        counts[name] = sl.stop - sl.start + 1
    return FullModelFit(trace=trace, summary=summarize_fit(trace, design, y, group_counts=counts))


def fit_effect_fusion(
    data: Dataset,
    settings: FusionSettings,
    *,
    progress: IProgress | None = None,
) -> FusionFit:
    """
    Flat fit, data-driven prior, fusion sampler, partition selection by each
    requested strategy, and a flat-prior refit of every selected model.
    """
    if not data.categorical:
        raise ConfigurationError("effect fusion needs at least one categorical covariate")
    design = build_design(data)
    y = data.response
    beta_hat = flat_fit_vector(design.matrix, y)
    prior = build_prior(design, beta_hat, settings.prior)

    if progress is not None:
        progress.set_status("sampling the fusion model")
    trace = run_mcmc(
        design,
        y,
        prior,
        settings.sampler,
        beta_hat=beta_hat,
        sigma2_init=residual_variance(design.matrix, y, beta_hat),
        progress=progress,
    )

    if progress is not None:
        progress.set_status("selecting partitions")
    cocluster = accumulate_cocluster(trace)
    most, pam = select_partitions(trace, cocluster, settings.strategies, settings.k_max)
    groups = {name: group_count_distribution(S) for name, S in trace.allocations.items()}

    labels = {c.name: c.partition_labels() for c in data.categorical}
    choices: dict[str, dict[str, LevelPartition]] = {}
    if most:
        choices["most"] = {n: r.partition for n, r in most.items()}
    if pam:
        choices["pam"] = {n: r.partition for n, r in pam.items()}

    if progress is not None:
        progress.set_status("refitting selected models")
    models = {}
    for i, (strategy, partitions) in enumerate(choices.items()):
        models[strategy] = refit_partitions(
            design,
            y,
            partitions,
            strategy=strategy,
            refit=settings.refit,
            seed=derive_seed(settings.sampler.seed, _REFIT_STREAM, i),
            element_labels=labels,
        )
        logger.info(
            "%s: groups %s, DIC %.1f, BICmcmc %.1f",
            strategy,
            models[strategy].fused.group_counts(),
            models[strategy].summary.dic.dic,
            models[strategy].summary.bic.bic,
        )

    full = None
    if settings.include_full_model:
        full = fit_full_model(
            design, y, refit=settings.refit, seed=derive_seed(settings.sampler.seed, _FULL_STREAM)
        )

    return FusionFit(
        data=data,
        design=design,
        beta_hat=beta_hat,
        prior=prior,
        trace=trace,
        cocluster=cocluster,
        group_counts=groups,
        most=most,
        pam=pam,
        models=models,
        averaged=model_averaged_estimates(trace),
        full=full,
    )
