from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial
from typing import Any

import numpy as np
import pandas as pd

from effectfuse.domain.errors import ConfigurationError, EffectFusionError
from effectfuse.domain.interfaces import IProgress
from effectfuse.domain.models import (
    CategoricalCovariate,
    CoefficientVector,
    Dataset,
    LevelPartition,
    canonical_labels,
)
from effectfuse.services.design import build_design, unflatten
from effectfuse.services.evaluation import cluster_metrics, mse, mspe
from effectfuse.services.pipeline import (
    FusionSettings,
    RefitSettings,
    fit_effect_fusion,
    fit_full_model,
    refit_partitions,
)
from effectfuse.services.prior import PriorSettings, PsiMode
from effectfuse.services.sampler import SamplerConfig, derive_seed, make_rng

logger = logging.getLogger(__name__)

# Seed stream keys: (seed, replication, key)
_DATA_STREAM = 0
_NEW_DATA_STREAM = 1
_COMPARATOR_STREAM = 2
_CELL_STREAM_BASE = 100


# -----------------------------------------------------------------------------
# Design
# -----------------------------------------------------------------------------


@dataclass(frozen=True)
class CovariateSpec:
    """Level effects of levels 1..c (the baseline level 0 has effect 0)."""

    name: str
    effects: tuple[float, ...]

    @property
    def n_levels(self) -> int:
        return len(self.effects) + 1

    def true_partition(self) -> LevelPartition:
        values = (0.0, *self.effects)
        return LevelPartition.from_labels(self.name, canonical_labels(_value_ids(values)))


def _value_ids(values: Sequence[float]) -> list[int]:
    ids: dict[float, int] = {}
    return [ids.setdefault(float(v), len(ids)) for v in values]


def contiguous_runs(n_effects: int, values: Sequence[float]) -> tuple[float, ...]:
    """
    Spread `values` over the n_effects + 1 categories in contiguous runs that are
    as equal as possible (larger runs first); the baseline opens the first run.
    """
    n_total = n_effects + 1
    base, extra = divmod(n_total, len(values))
    sizes = [base + 1 if i < extra else base for i in range(len(values))]
    full = [v for v, s in zip(values, sizes, strict=True) for _ in range(s)]
    return tuple(float(v) for v in full[1:])


@dataclass(frozen=True)
class SimDesign:
    covariates: tuple[CovariateSpec, ...]
    n: int = 4000
    replications: int = 100
    noise: float = 0.5
    noise_is_variance: bool = True
    beta0: float = 0.0
    n_new: int = 1000
    nu_grid: tuple[float, ...] = (1e1, 1e2, 1e3, 1e4, 1e5, 1e6)
    psi_modes: tuple[PsiMode, ...] = ("fixed", "random")
    seed: int = 0
    burn_in: int = 15_000
    iterations: int = 15_000
    thin: int = 1
    refit: RefitSettings = field(default_factory=RefitSettings)
    k_max: int | None = None

    def __post_init__(self) -> None:
        if self.replications < 1:
            raise ConfigurationError(f"replications must be >= 1, got {self.replications}")
        if self.thin < 1:
            raise ConfigurationError(f"thin must be >= 1, got {self.thin}")
        if self.noise < 0:
            raise ConfigurationError(f"noise must be non-negative, got {self.noise}")
        bad = [nu for nu in self.nu_grid if not nu > 0]
        if bad or not self.nu_grid:
            raise ConfigurationError(
                "nu values must be positive", details={"nu_grid": list(self.nu_grid)}
            )
        for mode in self.psi_modes:
            if mode not in ("fixed", "random"):
                raise ConfigurationError(f"unknown psi mode {mode!r}")
        needed = 1 + sum(c.n_levels - 1 for c in self.covariates)
        if self.n <= needed:
            raise ConfigurationError(
                f"n={self.n} does not exceed the {needed} design columns",
                details={"n": self.n, "columns": needed},
            )

    @property
    def noise_sd(self) -> float:
        return math.sqrt(self.noise) if self.noise_is_variance else self.noise

    def cells(self) -> list[tuple[float, PsiMode]]:
        return [(nu, mode) for mode in self.psi_modes for nu in self.nu_grid]

    def beta_true(self) -> CoefficientVector:
        return CoefficientVector(
            beta0=self.beta0, beta=tuple(np.asarray(c.effects) for c in self.covariates)
        )

    def describe(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "replications": self.replications,
            "noise": self.noise,
            "noise_is_variance": self.noise_is_variance,
            "noise_sd": self.noise_sd,
            "n_new": self.n_new,
            "nu_grid": list(self.nu_grid),
            "psi_modes": list(self.psi_modes),
            "seed": self.seed,
            "burn_in": self.burn_in,
            "iterations": self.iterations,
            "thin": self.thin,
            "refit": vars(self.refit),
            "covariates": [
                {
                    "name": c.name,
                    "levels": c.n_levels,
                    "effects": list(c.effects),
                    "true_blocks": [list(b) for b in c.true_partition().blocks],
                }
                for c in self.covariates
            ],
        }


def default_design() -> SimDesign:
    """Four uniform categorical covariates: 10, 10, 10 and 100 levels."""
    return SimDesign(
        covariates=(
            CovariateSpec("x1", (0, 0, 0, 0.5, 0.5, 0.5, 1, 1, 1)),
            CovariateSpec("x2", (0,) * 8 + (1,)),
            CovariateSpec("x3", (0,) * 9),
            CovariateSpec("x4", contiguous_runs(99, (0, 0.5, 1, 1.5, 2, 2.5))),
        )
    )


def desk_scale_design() -> SimDesign:
    return replace(
        default_design(),
        replications=20,
        n=2000,
        burn_in=5000,
        iterations=5000,
        nu_grid=(1e2, 1e3, 1e4, 1e5, 1e6),
    )


def true_partitions(design: SimDesign) -> dict[str, LevelPartition]:
    return {c.name: c.true_partition() for c in design.covariates}


# -----------------------------------------------------------------------------
# Data generation
# -----------------------------------------------------------------------------


def _draw_levels(rng: np.random.Generator, n: int, n_levels: int) -> np.ndarray:
    # Redraw until every level occurs.
    while True:
        obs = rng.integers(0, n_levels, size=n)
        if np.unique(obs).size == n_levels:
            return obs


def simulate_dataset(design: SimDesign, n: int, rng: np.random.Generator) -> Dataset:
    cats = []
    mean = np.full(n, design.beta0)
    for spec in design.covariates:
        obs = _draw_levels(rng, n, spec.n_levels)
        effects = np.concatenate([[0.0], spec.effects])
        mean += effects[obs]
        cats.append(
            CategoricalCovariate(
                name=spec.name,
                levels=tuple(str(k) for k in range(spec.n_levels)),
                observations=obs,
            )
        )
    y = mean + design.noise_sd * rng.standard_normal(n)
    return Dataset(response=y, categorical=tuple(cats))


def generate_dataset(design: SimDesign, rep_index: int) -> tuple[Dataset, CoefficientVector]:
    """Training data of one replication; deterministic in (seed, rep_index)."""
    rng = make_rng([design.seed, rep_index, _DATA_STREAM])
    return simulate_dataset(design, design.n, rng), design.beta_true()


def generate_test_dataset(design: SimDesign, rep_index: int) -> Dataset:
    rng = make_rng([design.seed, rep_index, _NEW_DATA_STREAM])
    return simulate_dataset(design, design.n_new, rng)


# -----------------------------------------------------------------------------
# Study driver
# -----------------------------------------------------------------------------


@dataclass(frozen=True)
class ReplicationResult:
    rep: int
    cluster_rows: list[dict[str, Any]]
    criteria_rows: list[dict[str, Any]]
    failures: list[dict[str, Any]]


def _criteria_row(
    rep: int, nu: float | None, mode: str, model: str, **values: Any
) -> dict[str, Any]:
    return {"rep": rep, "nu": nu, "psi_mode": mode, "model": model, **values}


def _failure(rep: int, nu: float | None, mode: str, exc: BaseException) -> dict[str, Any]:
    details = exc.details if isinstance(exc, EffectFusionError) else {}
    return {
        "rep": rep,
        "nu": nu,
        "psi_mode": mode,
        "error": type(exc).__name__,
        "message": str(exc),
        "details": details,
    }


def run_replication(design: SimDesign, rep: int) -> ReplicationResult:
    """Comparators plus every (nu, psi mode) cell of one replication."""
    data, beta_true = generate_dataset(design, rep)
    new_data = generate_test_dataset(design, rep)
    X_new = build_design(new_data)
    truths = true_partitions(design)
    labels = {c.name: c.partition_labels() for c in data.categorical}
    cluster_rows: list[dict[str, Any]] = []
    criteria_rows: list[dict[str, Any]] = []
    failures: list[dict[str, Any]] = []

    try:
        full_design = build_design(data)
        full = fit_full_model(
            full_design,
            data.response,
            refit=design.refit,
            seed=derive_seed(design.seed, rep, _COMPARATOR_STREAM, 0),
        )
        full_beta = full.trace.beta.mean(axis=0)
        criteria_rows.append(
            _criteria_row(
                rep,
                None,
                "",
                "full",
                mse=mse(beta_true, unflatten(full_beta, full_design.column_map)),
                mspe=mspe(full_beta, X_new, new_data.response),
                dic=full.summary.dic.dic,
                bic=full.summary.bic.bic,
            )
        )
        true_model = refit_partitions(
            full_design,
            data.response,
            truths,
            strategy="true",
            refit=design.refit,
            seed=derive_seed(design.seed, rep, _COMPARATOR_STREAM, 1),
            element_labels=labels,
        )
        criteria_rows.append(
            _criteria_row(
                rep,
                None,
                "",
                "true",
                mse=mse(beta_true, true_model.estimates),
                mspe=mspe(true_model.estimates, X_new, new_data.response),
                dic=true_model.summary.dic.dic,
                bic=true_model.summary.bic.bic,
            )
        )
    except (EffectFusionError, np.linalg.LinAlgError) as e:
        logger.warning("replication %d: comparator fit failed: %s", rep, e)
        failures.append(_failure(rep, None, "", e))

    for cell, (nu, mode) in enumerate(design.cells()):
        settings = FusionSettings(
            prior=PriorSettings(nu=nu, psi_mode=mode),
            sampler=SamplerConfig(
                burn_in=design.burn_in,
                iterations=design.iterations,
                thin=design.thin,
                seed=derive_seed(design.seed, rep, _CELL_STREAM_BASE + cell),
            ),
            refit=design.refit,
            k_max=design.k_max,
            include_full_model=False,
        )
        try:
            fit = fit_effect_fusion(data, settings)
        except (EffectFusionError, np.linalg.LinAlgError) as e:
            logger.warning("replication %d, nu=%g, %s: fit failed: %s", rep, nu, mode, e)
            failures.append(_failure(rep, nu, mode, e))
            continue

        for name, truth in truths.items():
            for strategy, model in fit.models.items():
                est = model.partitions[name]
                row = {
                    "rep": rep,
                    "nu": nu,
                    "psi_mode": mode,
                    "covariate": name,
                    "strategy": strategy,
                    "groups": est.n_groups,
                    "freq": fit.most[name].frequency if strategy == "most" else None,
                    **cluster_metrics(truth, est).to_dict(),
                }
                if strategy == "pam":
                    row["one_cluster_suspected"] = fit.pam[name].one_cluster_suspected
                cluster_rows.append(row)

        for strategy, model in fit.models.items():
            criteria_rows.append(
                _criteria_row(
                    rep,
                    nu,
                    mode,
                    strategy,
                    mse=mse(beta_true, model.estimates),
                    mspe=mspe(model.estimates, X_new, new_data.response),
                    dic=model.summary.dic.dic,
                    bic=model.summary.bic.bic,
                )
            )
        criteria_rows.append(
            _criteria_row(
                rep,
                nu,
                mode,
                "av",
                mse=mse(beta_true, fit.averaged),
                mspe=mspe(fit.averaged, X_new, new_data.response),
                dic=None,
                bic=None,
            )
        )

    return ReplicationResult(rep, cluster_rows, criteria_rows, failures)


_METRICS = ("groups", "freq", "ar", "err", "fpr", "fnr", "mse", "mspe", "dic", "bic")


def _frame(rows: list[dict[str, Any]]) -> pd.DataFrame:
    frame = pd.DataFrame(rows)
    for col in _METRICS:
        if col in frame.columns:
            frame[col] = pd.to_numeric(frame[col], errors="coerce")
    return frame


@dataclass(frozen=True, eq=False)
class StudyResult:
    """Long-format rows per replication plus aggregate tables."""

    design: SimDesign
    cluster: pd.DataFrame
    criteria: pd.DataFrame
    failures: list[dict[str, Any]]

    def cluster_table(self) -> pd.DataFrame:
        """Means over replications per (psi mode, nu, covariate, strategy)."""
        if self.cluster.empty:
            return self.cluster
        keys = ["psi_mode", "nu", "covariate", "strategy"]
        cols = ["freq", "groups", "ar", "err", "fpr", "fnr"]
        table = self.cluster.groupby(keys, sort=True)[cols].mean()
        table["replications"] = self.cluster.groupby(keys, sort=True).size()
        return table.reset_index()

    def criteria_table(self) -> pd.DataFrame:
        """Mean DIC, BICmcmc, MSE and MSPE per (psi mode, nu, model)."""
        if self.criteria.empty:
            return self.criteria
        keys = ["psi_mode", "nu", "model"]
        table = self.criteria.groupby(keys, sort=True, dropna=False)[
            ["dic", "bic", "mse", "mspe"]
        ].mean()
        return table.reset_index()

    def mse_curves(self) -> pd.DataFrame:
        """Per-replication MSE / MSPE in long format."""
        if self.criteria.empty:
            return self.criteria
        cols = ["psi_mode", "nu", "model", "rep", "mse", "mspe"]
        return self.criteria[cols].sort_values(["psi_mode", "nu", "model", "rep"]).reset_index(
            drop=True
        )


def run_study(
    design: SimDesign,
    *,
    sampler: SamplerConfig | None = None,
    nu_grid: Sequence[float] | None = None,
    psi_modes: Sequence[PsiMode] | None = None,
    max_workers: int = 1,
    progress: IProgress | None = None,
) -> StudyResult:
    """
    Fit every (nu, psi mode) cell on every replication. Cells own their RNG
    streams, so results do not depend on `max_workers` or completion order.
    A `sampler` replaces the design's chain lengths, thinning and master seed.
    """
    if sampler is not None:
        design = replace(
            design,
            burn_in=sampler.burn_in,
            iterations=sampler.iterations,
            thin=sampler.thin,
            seed=sampler.seed,
        )
    if nu_grid is not None:
        design = replace(design, nu_grid=tuple(float(v) for v in nu_grid))
    if psi_modes is not None:
        design = replace(design, psi_modes=tuple(psi_modes))

    reps = list(range(design.replications))
    logger.info(
        "study: %d replications x %d cells, n=%d, %d workers",
        len(reps),
        len(design.cells()),
        design.n,
        max_workers,
    )
    if progress is not None:
        progress.set_status("running simulation study")
        progress.set_progress(value=0, maximum=len(reps))

    results: list[ReplicationResult] = []
    if max_workers <= 1:
        for rep in reps:
            results.append(run_replication(design, rep))
            if progress is not None:
                progress.set_progress(value=len(results))
    else:
        with ProcessPoolExecutor(max_workers=min(max_workers, len(reps))) as pool:
            for res in pool.map(partial(run_replication, design), reps):
                results.append(res)
                if progress is not None:
                    progress.set_progress(value=len(results))

    results.sort(key=lambda r: r.rep)
    failures = [f for r in results for f in r.failures]
    if failures:
        logger.warning("%d study cells failed; see the failure rows", len(failures))
    return StudyResult(
        design=design,
        cluster=_frame([row for r in results for row in r.cluster_rows]),
        criteria=_frame([row for r in results for row in r.criteria_rows]),
        failures=failures,
    )
