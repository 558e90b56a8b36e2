from __future__ import annotations

import logging
from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np
from scipy import linalg, stats

from effectfuse.domain.errors import ConfigurationError, NumericalError
from effectfuse.domain.models import CoefficientVector, DesignMatrix
from effectfuse.services.design import unflatten
from effectfuse.utils.constants import (
    DEFAULT_B0,
    DEFAULT_E0,
    DEFAULT_G0,
    DEFAULT_NU,
    DEGENERATE_SPREAD_FLOOR,
    RANK_TOLERANCE,
)

logger = logging.getLogger(__name__)

PsiMode = Literal["fixed", "random"]


# -----------------------------------------------------------------------------
# Prior specification types
# -----------------------------------------------------------------------------


@dataclass(frozen=True)
class FixedPsi:
    psi: float

    @property
    def expected(self) -> float:
        return self.psi


@dataclass(frozen=True)
class RandomPsi:
    """psi_j ~ InvGamma(g0, G0)."""

    g0: float
    G0: float

    @property
    def expected(self) -> float:
        return self.G0 / (self.g0 - 1.0)

    @property
    def sd(self) -> float:
        return self.expected / float(np.sqrt(self.g0 - 2.0))


@dataclass(frozen=True)
class MixturePriorSpec:
    """Mixture prior on the level effects of one covariate."""

    covariate: str
    L: int
    e0: float
    m0: float
    M0: float
    V: float
    nu: float
    psi_prior: FixedPsi | RandomPsi
    flags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.L < 0:
            raise ConfigurationError(f"L must be >= 0 for '{self.covariate}'")
        if not 0 < self.e0 < 1:
            raise ConfigurationError(
                f"e0 must lie in (0, 1) for a sparse mixture, got {self.e0}",
                details={"covariate": self.covariate, "e0": self.e0},
            )
        if not self.M0 > 0:
            raise ConfigurationError(f"M0 must be positive for '{self.covariate}'")
        if isinstance(self.psi_prior, FixedPsi) and not self.psi_prior.psi > 0:
            raise ConfigurationError(f"psi must be positive for '{self.covariate}'")
        if isinstance(self.psi_prior, RandomPsi) and not (
            self.psi_prior.g0 > 2 and self.psi_prior.G0 > 0
        ):
            raise ConfigurationError(f"need g0 > 2 and G0 > 0 for '{self.covariate}'")

    @property
    def psi_mode(self) -> PsiMode:
        return "random" if isinstance(self.psi_prior, RandomPsi) else "fixed"

    @property
    def expected_psi(self) -> float:
        return self.psi_prior.expected

    def to_dict(self) -> dict[str, object]:
        out: dict[str, object] = {
            "covariate": self.covariate,
            "L": self.L,
            "e0": self.e0,
            "m0": self.m0,
            "M0": self.M0,
            "V": self.V,
            "nu": self.nu,
            "psi_mode": self.psi_mode,
            "expected_psi": self.expected_psi,
            "flags": list(self.flags),
        }
        if isinstance(self.psi_prior, RandomPsi):
            out.update(g0=self.psi_prior.g0, G0=self.psi_prior.G0)
        return out


@dataclass(frozen=True)
class GlobalPriorSpec:
    """Mixture priors for the categorical covariates, flat N(0, B0) elsewhere."""

    mixtures: tuple[MixturePriorSpec, ...]
    B0: float = DEFAULT_B0
    s0: float = 0.0
    S0: float = 0.0

    def __post_init__(self) -> None:
        if not self.B0 > 0:
            raise ConfigurationError(f"B0 must be positive, got {self.B0}")
        if self.s0 < 0 or self.S0 < 0:
            raise ConfigurationError("error-variance prior parameters must be non-negative")

    @property
    def flat_variance(self) -> float:
        return self.B0

    def mixture(self, covariate: str) -> MixturePriorSpec:
        for m in self.mixtures:
            if m.covariate == covariate:
                return m
        raise KeyError(covariate)

    def to_dict(self) -> dict[str, object]:
        return {
            "B0": self.B0,
            "s0": self.s0,
            "S0": self.S0,
            "mixtures": [m.to_dict() for m in self.mixtures],
        }


@dataclass(frozen=True)
class CovariatePriorOverride:
    nu: float | None = None
    e0: float | None = None
    psi_mode: PsiMode | None = None
    g0: float | None = None


@dataclass(frozen=True)
class PriorSettings:
    """User-facing prior knobs (run config `prior` section)."""

    nu: float = DEFAULT_NU
    e0: float = DEFAULT_E0
    psi_mode: PsiMode = "fixed"
    g0: float = DEFAULT_G0
    B0: float = DEFAULT_B0
    global_psi: bool = False
    overrides: Mapping[str, CovariatePriorOverride] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.nu > 0:
            raise ConfigurationError(f"nu must be positive, got {self.nu}", details={"nu": self.nu})
        if self.psi_mode not in ("fixed", "random"):
            raise ConfigurationError(f"psi_mode must be 'fixed' or 'random', got {self.psi_mode!r}")

    def for_covariate(self, name: str) -> PriorSettings:
        o = self.overrides.get(name)
        if o is None:
            return self
        return replace(
            self,
            nu=o.nu if o.nu is not None else self.nu,
            e0=o.e0 if o.e0 is not None else self.e0,
            psi_mode=o.psi_mode if o.psi_mode is not None else self.psi_mode,
            g0=o.g0 if o.g0 is not None else self.g0,
            overrides={},
        )


@dataclass(frozen=True)
class EmpiricalHyperparams:
    m0: float
    M0: float
    V: float
    psi: float
    flags: tuple[str, ...] = ()


# -----------------------------------------------------------------------------
# Operations
# -----------------------------------------------------------------------------


def flat_fit_vector(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Least-squares solution via QR; rank decided on singular values."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n <= p:
        raise NumericalError(
            f"need more records than columns for the flat fit (N={n}, columns={p})",
            details={"n": n, "columns": p},
        )
    sv = linalg.svdvals(X)
    if sv[-1] < RANK_TOLERANCE * sv[0]:
        rank = int(np.sum(sv >= RANK_TOLERANCE * sv[0]))
        raise NumericalError(
            f"design matrix is rank deficient (rank {rank} of {p})",
            details={"rank": rank, "columns": p, "smallest_singular_value": float(sv[-1])},
        )
    Q, R = linalg.qr(X, mode="economic")
    return linalg.solve_triangular(R, Q.T @ y)


def flat_fit(design: DesignMatrix, y: np.ndarray) -> CoefficientVector:
    """Flat-prior posterior mean in the B0 -> infinity limit (ordinary least squares)."""
    return unflatten(flat_fit_vector(design.matrix, y), design.column_map)


def residual_variance(X: np.ndarray, y: np.ndarray, beta: np.ndarray) -> float:
    resid = np.asarray(y) - np.asarray(X) @ np.asarray(beta)
    dof = max(len(resid) - X.shape[1], 1)
    return float(resid @ resid) / dof


def empirical_hyperparams(beta_hat_j: np.ndarray, nu: float) -> EmpiricalHyperparams:
    """
    m0 = mean, M0 = squared range, V = sample variance of the flat-prior effects,
    psi = V / nu.

    With a single effect V is undefined; V and M0 fall back to the squared distance
    to the zero component. Zero spread is floored at 1e-8 * (1 + m0^2).
    """
    b = np.asarray(beta_hat_j, dtype=float).reshape(-1)
    if b.size == 0:
        raise ConfigurationError("no level effects given")
    if not nu > 0:
        raise ConfigurationError(f"nu must be positive, got {nu}", details={"nu": nu})

    flags: list[str] = []
    m0 = float(b.mean())
    if b.size == 1:
        V = M0 = float(b[0] ** 2)
        flags.append("binary_covariate_spread")
    else:
        V = float(b.var(ddof=1))
        M0 = float((b.max() - b.min()) ** 2)

    floor = DEGENERATE_SPREAD_FLOOR * (1.0 + m0**2)
    if V <= floor or M0 <= floor:
        flags.append("degenerate_spread_floor")
        V = max(V, floor)
        M0 = max(M0, floor)

    return EmpiricalHyperparams(m0=m0, M0=M0, V=V, psi=V / nu, flags=tuple(flags))


def random_psi_hyperparams(V: float, nu: float, g0: float = DEFAULT_G0) -> tuple[float, float]:
    """(g0, G0) with G0 = (V / nu)(g0 - 1), so E(psi) = V / nu."""
    if not g0 > 2:
        raise ConfigurationError(f"g0 must exceed 2, got {g0}", details={"g0": g0})
    if not V > 0 or not nu > 0:
        raise ConfigurationError("V and nu must be positive", details={"V": V, "nu": nu})
    return float(g0), float(V / nu * (g0 - 1.0))


def build_prior(
    design: DesignMatrix, beta_hat: np.ndarray, settings: PriorSettings
) -> GlobalPriorSpec:
    """Assemble the data-driven prior from a flat-prior estimate (flattened layout)."""
    beta_hat = np.asarray(beta_hat, dtype=float)
    names = design.covariate_names()

    pooled_V: float | None = None
    if settings.global_psi and names:
        pooled = np.concatenate([beta_hat[design.covariate_slice(n)] for n in names])
        pooled_V = empirical_hyperparams(pooled, settings.nu).V
        logger.info("global psi: pooled variance V=%.6g over %d effects", pooled_V, pooled.size)

    mixtures = []
    for name in names:
        s = settings.for_covariate(name)
        b = beta_hat[design.covariate_slice(name)]
        hp = empirical_hyperparams(b, s.nu)
        V = pooled_V if pooled_V is not None else hp.V
        flags = hp.flags + (("global_psi",) if pooled_V is not None else ())
        if "binary_covariate_spread" in hp.flags:
            logger.warning("covariate '%s' has one effect; V and M0 fall back to beta_hat^2", name)
        if "degenerate_spread_floor" in hp.flags:
            logger.warning("covariate '%s' has (near) zero effect spread; floored", name)

        if s.psi_mode == "random":
            g0, G0 = random_psi_hyperparams(V, s.nu, s.g0)
            psi_prior: FixedPsi | RandomPsi = RandomPsi(g0=g0, G0=G0)
        else:
            psi_prior = FixedPsi(psi=V / s.nu)

        mixtures.append(
            MixturePriorSpec(
                covariate=name,
                L=b.size,
                e0=s.e0,
                m0=hp.m0,
                M0=hp.M0,
                V=V,
                nu=s.nu,
                psi_prior=psi_prior,
                flags=flags,
            )
        )
    return GlobalPriorSpec(mixtures=tuple(mixtures), B0=settings.B0)


def mixture_prior_density(
    spec: MixturePriorSpec, beta_hat_j: np.ndarray, grid: np.ndarray
) -> np.ndarray:
    """
    Illustrative prior on the level effects: equal-weight normal components at 0
    and at each flat-prior estimate, all with variance E(psi_j).
    """
    centres = np.concatenate([[0.0], np.asarray(beta_hat_j, dtype=float)])
    sd = np.sqrt(spec.expected_psi)
    dens = stats.norm.pdf(np.asarray(grid, dtype=float)[:, None], loc=centres[None, :], scale=sd)
    return dens.mean(axis=1)
