from __future__ import annotations

import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from effectfuse.domain.errors import DataValidationError, NumericalError
from effectfuse.domain.interfaces import IProgress
from effectfuse.domain.models import (
    CoefficientVector,
    ColumnInfo,
    DesignMatrix,
    LevelPartition,
    readonly_array,
)
from effectfuse.services.design import unflatten
from effectfuse.services.prior import GlobalPriorSpec, flat_fit_vector, residual_variance
from effectfuse.services.sampler import (
    McmcTrace,
    SamplerConfig,
    SamplerContext,
    init_state,
    run_gibbs,
)
from effectfuse.utils.constants import (
    DEFAULT_B0,
    DEFAULT_REFIT_BURN_IN,
    DEFAULT_REFIT_ITERATIONS,
)

logger = logging.getLogger(__name__)

_LOG_2PI = math.log(2.0 * math.pi)


# -----------------------------------------------------------------------------
# Fused design
# -----------------------------------------------------------------------------


@dataclass(frozen=True)
class BlockColumn:
    covariate: str
    members: tuple[int, ...]


@dataclass(frozen=True, eq=False)
class FusedDesign:
    """
    A design whose dummy columns are sums over the nonzero blocks of each
    covariate's partition. The zero block is absorbed into the baseline.
    """

    design: DesignMatrix
    block_map: tuple[BlockColumn | None, ...]
    source_columns: tuple[ColumnInfo, ...]
    partitions: Mapping[str, LevelPartition]
    expansion: np.ndarray = field(repr=False)

    @property
    def matrix(self) -> np.ndarray:
        return self.design.matrix

    @property
    def n_columns(self) -> int:
        return self.design.n_columns

    def group_counts(self) -> dict[str, int]:
        return {name: p.n_groups for name, p in self.partitions.items()}


def build_fused_design(
    design: DesignMatrix, partitions: Mapping[str, LevelPartition]
) -> FusedDesign:
    names = design.covariate_names()
    missing = [n for n in names if n not in partitions]
    if missing:
        raise DataValidationError(
            f"no partition given for {missing}", details={"covariates": missing}
        )

    cols = [design.matrix[:, 0]]
    column_map: list[ColumnInfo] = [design.column_map[0]]
    block_map: list[BlockColumn | None] = [None]
    # expansion[i, f]: full column i takes fused coefficient f
    links: list[tuple[int, int]] = [(0, 0)]

    for name in names:
        sl = design.covariate_slice(name)
        part = partitions[name]
        if part.n_elements != sl.stop - sl.start + 1:
            raise DataValidationError(
                f"partition of '{name}' covers {part.n_elements} elements, "
                f"covariate has {sl.stop - sl.start + 1}",
                details={"covariate": name},
            )
        for block in part.nonzero_blocks:
            idx = [sl.start + k - 1 for k in block]
            f = len(cols)
            cols.append(design.matrix[:, idx].sum(axis=1))
            level = "+".join(str(design.column_map[i].level) for i in idx)
            column_map.append(ColumnInfo("dummy", name, level))
            block_map.append(BlockColumn(name, block))
            links.extend((i, f) for i in idx)

    for i, col in enumerate(design.column_map):
        if col.kind == "continuous":
            links.append((i, len(cols)))
            cols.append(design.matrix[:, i])
            column_map.append(col)
            block_map.append(None)

    expansion = np.zeros((design.n_columns, len(cols)))
    for i, f in links:
        expansion[i, f] = 1.0

    return FusedDesign(
        design=DesignMatrix(matrix=np.column_stack(cols), column_map=tuple(column_map)),
        block_map=tuple(block_map),
        source_columns=design.column_map,
        partitions=dict(partitions),
        expansion=readonly_array(expansion),
    )


def expand_fused(fused: FusedDesign, coefficients: np.ndarray) -> CoefficientVector:
    """Map fused coefficients back to the full dummy layout (zero block -> 0)."""
    v = np.asarray(coefficients, dtype=float).reshape(-1)
    if v.size != fused.n_columns:
        raise DataValidationError(
            f"fused coefficient vector has length {v.size}, expected {fused.n_columns}",
            details={"got": int(v.size), "expected": fused.n_columns},
        )
    return unflatten(fused.expansion @ v, fused.source_columns)


# -----------------------------------------------------------------------------
# Flat-prior refit
# -----------------------------------------------------------------------------


def refit_flat(
    fused: FusedDesign | DesignMatrix,
    y: np.ndarray,
    *,
    B0: float = DEFAULT_B0,
    iterations: int = DEFAULT_REFIT_ITERATIONS,
    burn_in: int = DEFAULT_REFIT_BURN_IN,
    seed: int = 0,
    progress: IProgress | None = None,
) -> McmcTrace:
    """Gibbs run of the regression steps under beta ~ N(0, B0 I)."""
    design = fused.design if isinstance(fused, FusedDesign) else fused
    beta_hat = flat_fit_vector(design.matrix, y)
    prior = GlobalPriorSpec(mixtures=(), B0=B0)
    ctx = SamplerContext(X=design.matrix, y=y)
    state = init_state(prior, ctx, beta_hat, residual_variance(design.matrix, y, beta_hat))
    config = SamplerConfig(burn_in=burn_in, iterations=iterations, seed=seed)
    logger.debug("flat refit: %d columns, %d + %d sweeps", design.n_columns, burn_in, iterations)
    return run_gibbs(ctx, prior, config, state, column_map=design.column_map, progress=progress)


def model_averaged_estimates(trace: McmcTrace) -> CoefficientVector:
    """Posterior mean of beta over every visited fusion model."""
    if trace.n_draws == 0:
        raise NumericalError("trace has no draws")
    return unflatten(trace.beta.mean(axis=0), trace.column_map)


def hpd_interval(draws: np.ndarray, level: float = 0.95) -> tuple[float, float]:
    """Shortest window holding ceil(level * n) of the sorted draws."""
    x = np.sort(np.asarray(draws, dtype=float).reshape(-1))
    n = x.size
    if n < 10:
        raise DataValidationError(f"need at least 10 draws for an HPD interval, got {n}")
    if not 0 < level < 1:
        raise DataValidationError(f"level must lie in (0, 1), got {level}")
    m = math.ceil(level * n)
    widths = x[m - 1 :] - x[: n - m + 1]
    i = int(np.argmin(widths))
    return float(x[i]), float(x[i + m - 1])


# -----------------------------------------------------------------------------
# Criteria
# -----------------------------------------------------------------------------


def loglik_draws(trace: McmcTrace, design: DesignMatrix, y: np.ndarray) -> np.ndarray:
    """Gaussian log-likelihood of every draw."""
    X = design.matrix
    y = np.asarray(y, dtype=float)
    if X.shape[1] != trace.beta.shape[1]:
        raise DataValidationError("trace and design disagree on the column count")
    B = trace.beta
    rss = float(y @ y) - 2.0 * B @ (X.T @ y) + np.einsum("di,ij,dj->d", B, X.T @ X, B)
    rss = np.maximum(rss, 0.0)
    s2 = trace.sigma2
    return -0.5 * (y.size * (_LOG_2PI + np.log(s2)) + rss / s2)


def deviance(beta: np.ndarray, sigma2: float, design: DesignMatrix, y: np.ndarray) -> float:
    """-2 log L = N log(2 pi sigma2) + RSS / sigma2."""
    resid = np.asarray(y, dtype=float) - design.matrix @ np.asarray(beta, dtype=float)
    return float(len(resid) * (_LOG_2PI + math.log(sigma2)) + (resid @ resid) / sigma2)


@dataclass(frozen=True)
class DicResult:
    dic: float
    mean_deviance: float
    plugin_deviance: float
    p_d: float


@dataclass(frozen=True)
class BicResult:
    bic: float
    max_loglik: float
    draw_index: int
    n_parameters: int


def dic(trace: McmcTrace, design: DesignMatrix, y: np.ndarray) -> DicResult:
    """DIC = mean deviance + p_D, plug-in at the posterior means of beta and sigma2."""
    d_bar = float(np.mean(-2.0 * loglik_draws(trace, design, y)))
    d_hat = deviance(trace.beta.mean(axis=0), float(trace.sigma2.mean()), design, y)
    p_d = d_bar - d_hat
    return DicResult(dic=d_bar + p_d, mean_deviance=d_bar, plugin_deviance=d_hat, p_d=p_d)


def bic_mcmc(trace: McmcTrace, design: DesignMatrix, y: np.ndarray) -> BicResult:
    """-2 max log L over the draws + d log N, with sigma2 counted in d."""
    ll = loglik_draws(trace, design, y)
    i = int(np.argmax(ll))
    d = design.n_columns + 1
    n = len(y)
    return BicResult(
        bic=float(-2.0 * ll[i] + d * math.log(n)),
        max_loglik=float(ll[i]),
        draw_index=i,
        n_parameters=d,
    )


# -----------------------------------------------------------------------------
# Summary
# -----------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelFitSummary:
    labels: tuple[str, ...]
    means: np.ndarray
    hpd_lower: np.ndarray
    hpd_upper: np.ndarray
    dic: DicResult
    bic: BicResult
    group_counts: Mapping[str, int]
    members: tuple[str, ...] = ()
    level: float = 0.95
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, object]:
        return {
            "level": self.level,
            "dic": self.dic.dic,
            "p_d": self.dic.p_d,
            "mean_deviance": self.dic.mean_deviance,
            "bic_mcmc": self.bic.bic,
            "max_loglik": self.bic.max_loglik,
            "n_parameters": self.bic.n_parameters,
            "group_counts": dict(self.group_counts),
            "flags": list(self.flags),
            "conventions": {
                "dic_plugin": "posterior means of beta and sigma2",
                "bic_parameters": "columns + 1 (sigma2)",
            },
            "coefficients": self.to_frame().to_dict(orient="records"),
        }

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(
            {
                "coefficient": list(self.labels),
                "mean": self.means,
                "hpd_lower": self.hpd_lower,
                "hpd_upper": self.hpd_upper,
            }
        )
        if self.members:
            frame["members"] = list(self.members)
        return frame


def summarize_fit(
    trace: McmcTrace,
    design: DesignMatrix,
    y: np.ndarray,
    *,
    group_counts: Mapping[str, int] | None = None,
    members: Sequence[str] = (),
    level: float = 0.95,
) -> ModelFitSummary:
    means = trace.beta.mean(axis=0)
    bounds = np.array([hpd_interval(trace.beta[:, i], level) for i in range(trace.beta.shape[1])])
    lo, hi = bounds[:, 0], bounds[:, 1]
    flags: list[str] = []
    outside = (means < lo) | (means > hi)
    if outside.any():
        names = [trace.labels[i] for i in np.flatnonzero(outside)]
        logger.warning("posterior mean outside its HPD interval for %s", names)
        flags.append("mean_outside_hpd")
    return ModelFitSummary(
        labels=tuple(trace.labels),
        means=means,
        hpd_lower=lo,
        hpd_upper=hi,
        dic=dic(trace, design, y),
        bic=bic_mcmc(trace, design, y),
        group_counts=dict(group_counts or {}),
        members=tuple(members),
        level=level,
        flags=tuple(flags),
    )


def block_members(fused: FusedDesign, element_labels: Mapping[str, Sequence[str]]) -> list[str]:
    """Human-readable members per fused column ('' for intercept and continuous)."""
    out = []
    for bc in fused.block_map:
        if bc is None:
            out.append("")
        else:
            labels = element_labels[bc.covariate]
            out.append(" ".join(str(labels[k]) for k in bc.members))
    return out
