from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from effectfuse.domain.errors import ConfigurationError, NumericalError
from effectfuse.domain.interfaces import IProgress
from effectfuse.domain.models import ColumnInfo, DesignMatrix, readonly_array
from effectfuse.services.prior import GlobalPriorSpec, RandomPsi
from effectfuse.utils.constants import (
    DEFAULT_BURN_IN,
    DEFAULT_ITERATIONS,
    JITTER_SCALE,
    SIMPLEX_TOLERANCE,
)

logger = logging.getLogger(__name__)

_LOG_2PI = float(np.log(2.0 * np.pi))
_TINY = float(np.finfo(float).tiny)


# -----------------------------------------------------------------------------
# Types
# -----------------------------------------------------------------------------


@dataclass(frozen=True)
class SamplerConfig:
    burn_in: int = DEFAULT_BURN_IN
    iterations: int = DEFAULT_ITERATIONS
    seed: int = 0
    thin: int = 1
    record_mixture_params: bool = False

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ConfigurationError(
                f"iterations must be >= 1, got {self.iterations}",
                details={"iterations": self.iterations},
            )
        if self.burn_in < 0:
            raise ConfigurationError(f"burn_in must be >= 0, got {self.burn_in}")
        if self.thin < 1:
            raise ConfigurationError(f"thin must be >= 1, got {self.thin}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigurationError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    @property
    def total_sweeps(self) -> int:
        return self.burn_in + self.iterations * self.thin


@dataclass
class CovariateState:
    """Mixture parameters of one covariate. mu[0] is the zero component."""

    log_eta: np.ndarray
    mu: np.ndarray
    psi: float
    S: np.ndarray

    @property
    def eta(self) -> np.ndarray:
        return np.maximum(np.exp(self.log_eta), _TINY)

    @property
    def L(self) -> int:
        return int(self.mu.size) - 1

    def counts(self) -> np.ndarray:
        """N_jl per component."""
        return np.bincount(self.S, minlength=self.L + 1)


@dataclass
class McmcState:
    """One sweep's parameters. `beta` is in the flattened design-column layout."""

    beta: np.ndarray
    sigma2: float
    mixtures: list[CovariateState] = field(default_factory=list)

    def check(self) -> None:
        if not self.sigma2 > 0:
            raise NumericalError(
                "sigma2 left the positive half-line", details={"sigma2": self.sigma2}
            )
        for j, m in enumerate(self.mixtures):
            total = float(np.exp(logsumexp(m.log_eta)))
            if abs(total - 1.0) > SIMPLEX_TOLERANCE * max(m.L + 1, 1):
                raise NumericalError("component weights left the simplex", details={"mixture": j})
            if m.mu[0] != 0.0:
                raise NumericalError("zero component mean moved", details={"mixture": j})
            if not m.psi > 0:
                raise NumericalError("psi left the positive half-line", details={"mixture": j})


@dataclass(frozen=True, eq=False)
class SamplerContext:
    """Data-side quantities shared by every sweep (read-only)."""

    X: np.ndarray
    y: np.ndarray
    mixture_slices: tuple[slice, ...] = ()
    XtX: np.ndarray = field(init=False)
    Xty: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        X = readonly_array(np.asarray(self.X, dtype=float))
        y = readonly_array(np.asarray(self.y, dtype=float).reshape(-1))
        if X.ndim != 2 or X.shape[0] != y.size:
            raise ConfigurationError("design and response do not conform")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "XtX", readonly_array(X.T @ X))
        object.__setattr__(self, "Xty", readonly_array(X.T @ y))

    @classmethod
    def from_design(
        cls, design: DesignMatrix, y: np.ndarray, prior: GlobalPriorSpec
    ) -> SamplerContext:
        slices = []
        for spec in prior.mixtures:
            try:
                sl = design.covariate_slice(spec.covariate)
            except KeyError as e:
                raise ConfigurationError(
                    f"prior names covariate '{spec.covariate}' absent from the design",
                    details={"covariate": spec.covariate},
                ) from e
            c = sl.stop - sl.start
            if spec.L > c:
                raise ConfigurationError(
                    f"L={spec.L} exceeds the {c} effects of '{spec.covariate}'",
                    details={"covariate": spec.covariate},
                )
            slices.append(sl)
        return cls(X=design.matrix, y=y, mixture_slices=tuple(slices))

    @property
    def n(self) -> int:
        return int(self.y.size)

    @property
    def p(self) -> int:
        return int(self.X.shape[1])

    def with_response(self, y: np.ndarray) -> SamplerContext:
        return SamplerContext(X=self.X, y=y, mixture_slices=self.mixture_slices)


@dataclass(frozen=True, eq=False)
class McmcTrace:
    """Retained draws (burn-in discarded). Rows are draws."""

    beta: np.ndarray
    sigma2: np.ndarray
    allocations: dict[str, np.ndarray]
    column_map: tuple[ColumnInfo, ...]
    burn_in: int
    seed: int
    thin: int = 1
    mu: dict[str, np.ndarray] | None = None
    eta: dict[str, np.ndarray] | None = None
    psi: dict[str, np.ndarray] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "beta", readonly_array(self.beta))
        object.__setattr__(self, "sigma2", readonly_array(self.sigma2))
        for name in ("allocations", "mu", "eta", "psi"):
            d = getattr(self, name)
            if d is not None:
                object.__setattr__(self, name, {k: readonly_array(v) for k, v in d.items()})
        if self.beta.shape[0] != self.sigma2.shape[0]:
            raise NumericalError("trace arrays disagree on the draw count")

    @property
    def n_draws(self) -> int:
        return int(self.sigma2.shape[0])

    @property
    def covariates(self) -> list[str]:
        return list(self.allocations)

    @property
    def labels(self) -> list[str]:
        return [c.label for c in self.column_map]


# -----------------------------------------------------------------------------
# Closed-form conditionals (also used by tests as oracles)
# -----------------------------------------------------------------------------


def normal_posterior(
    XtX: np.ndarray,
    Xty: np.ndarray,
    sigma2: float,
    prior_mean: np.ndarray,
    prior_var: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """(b_N, B_N) for y ~ N(X beta, sigma2 I), beta ~ N(b0, diag(prior_var))."""
    prec = XtX / sigma2 + np.diag(1.0 / prior_var)
    B_N = linalg.inv(prec)
    b_N = B_N @ (Xty / sigma2 + prior_mean / prior_var)
    return b_N, B_N


def sigma2_posterior(rss: float, n: int, s0: float = 0.0, S0: float = 0.0) -> tuple[float, float]:
    """(s_N, S_N) of the inverse-gamma full conditional of sigma2."""
    return s0 + n / 2.0, S0 + rss / 2.0


def _cholesky_with_jitter(prec: np.ndarray) -> np.ndarray:
    try:
        return linalg.cholesky(prec, lower=True)
    except linalg.LinAlgError:
        jitter = JITTER_SCALE * float(np.trace(prec)) / prec.shape[0]
        logger.debug("posterior precision not PD; retrying with jitter %.3g", jitter)
        try:
            return linalg.cholesky(prec + jitter * np.eye(prec.shape[0]), lower=True)
        except linalg.LinAlgError as e:
            eig = linalg.eigvalsh(prec)
            raise NumericalError(
                "posterior covariance of beta is not positive definite",
                details={
                    "min_eigenvalue": float(eig[0]),
                    "max_eigenvalue": float(eig[-1]),
                    "jitter": jitter,
                },
            ) from e


def _log_gamma_variates(rng: np.random.Generator, alpha: np.ndarray) -> np.ndarray:
    """log of Gamma(alpha, 1) draws, stable for alpha << 1."""
    g = rng.standard_gamma(alpha + 1.0)
    u = rng.random(alpha.size)
    with np.errstate(divide="ignore"):
        return np.log(g) + np.log(u) / alpha


# -----------------------------------------------------------------------------
# Prior moments implied by the current allocations
# -----------------------------------------------------------------------------


def prior_moments(
    state: McmcState, ctx: SamplerContext, prior: GlobalPriorSpec
) -> tuple[np.ndarray, np.ndarray]:
    """b0(S) and the diagonal of B0(S)."""
    mean = np.zeros(ctx.p)
    var = np.full(ctx.p, prior.B0)
    for sl, m in zip(ctx.mixture_slices, state.mixtures, strict=True):
        mean[sl] = m.mu[m.S]
        var[sl] = m.psi
    return mean, var


# -----------------------------------------------------------------------------
# Gibbs steps
# -----------------------------------------------------------------------------


def step_beta(
    state: McmcState, ctx: SamplerContext, prior: GlobalPriorSpec, rng: np.random.Generator
) -> None:
    """Joint draw of beta from N(b_N, B_N) through the Cholesky factor of B_N^-1."""
    b0, B0 = prior_moments(state, ctx, prior)
    prec = ctx.XtX / state.sigma2 + np.diag(1.0 / B0)
    rhs = ctx.Xty / state.sigma2 + b0 / B0
    chol = _cholesky_with_jitter(prec)
    mean = linalg.cho_solve((chol, True), rhs)
    z = rng.standard_normal(ctx.p)
    state.beta = mean + linalg.solve_triangular(chol.T, z, lower=False)


def step_sigma2(
    state: McmcState, ctx: SamplerContext, prior: GlobalPriorSpec, rng: np.random.Generator
) -> None:
    resid = ctx.y - ctx.X @ state.beta
    rss = float(resid @ resid)
    if not rss > 0:
        raise NumericalError(
            "residual sum of squares is zero; the error variance is degenerate",
            details={"n": ctx.n},
        )
    s_N, S_N = sigma2_posterior(rss, ctx.n, prior.s0, prior.S0)
    state.sigma2 = S_N / rng.standard_gamma(s_N)


def step_eta(
    state: McmcState, ctx: SamplerContext, prior: GlobalPriorSpec, rng: np.random.Generator
) -> None:
    """eta_j ~ Dirichlet(e0 + N_j0, ..., e0 + N_jL), drawn in log space."""
    for spec, m in zip(prior.mixtures, state.mixtures, strict=True):
        alpha = spec.e0 + m.counts()
        lg = _log_gamma_variates(rng, alpha)
        m.log_eta = lg - logsumexp(lg)


def step_mu(
    state: McmcState, ctx: SamplerContext, prior: GlobalPriorSpec, rng: np.random.Generator
) -> None:
    """Component means 1..L; empty components draw from N(m0, M0)."""
    for spec, sl, m in zip(prior.mixtures, ctx.mixture_slices, state.mixtures, strict=True):
        if m.L == 0:
            continue
        b = state.beta[sl]
        n_l = m.counts()[1:].astype(float)
        sum_l = np.bincount(m.S, weights=b, minlength=m.L + 1)[1:]
        M = 1.0 / (n_l / m.psi + 1.0 / spec.M0)
        mean = M * (sum_l / m.psi + spec.m0 / spec.M0)
        m.mu[1:] = mean + np.sqrt(M) * rng.standard_normal(m.L)


def step_psi(
    state: McmcState, ctx: SamplerContext, prior: GlobalPriorSpec, rng: np.random.Generator
) -> None:
    """Inverse-gamma update of psi_j; fixed-psi covariates are left untouched."""
    for spec, sl, m in zip(prior.mixtures, ctx.mixture_slices, state.mixtures, strict=True):
        if not isinstance(spec.psi_prior, RandomPsi):
            continue
        dev = state.beta[sl] - m.mu[m.S]
        shape = spec.psi_prior.g0 + dev.size / 2.0
        scale = spec.psi_prior.G0 + 0.5 * float(dev @ dev)
        m.psi = scale / rng.standard_gamma(shape)


def allocation_log_probs(beta_j: np.ndarray, m: CovariateState) -> np.ndarray:
    """Normalised log P(S_jk = l), shape (c_j, L + 1)."""
    diff = beta_j[:, None] - m.mu[None, :]
    logp = m.log_eta[None, :] - 0.5 * (_LOG_2PI + np.log(m.psi)) - diff**2 / (2.0 * m.psi)
    lse = logsumexp(logp, axis=1, keepdims=True)
    if not np.all(np.isfinite(lse)):
        bad = int(np.flatnonzero(~np.isfinite(lse[:, 0]))[0])
        raise NumericalError(
            "all component densities underflowed for an allocation",
            details={"level": bad, "beta": float(beta_j[bad]), "psi": m.psi},
        )
    return logp - lse


def step_allocations(
    state: McmcState, ctx: SamplerContext, prior: GlobalPriorSpec, rng: np.random.Generator
) -> None:
    for sl, m in zip(ctx.mixture_slices, state.mixtures, strict=True):
        logp = allocation_log_probs(state.beta[sl], m)
        cdf = np.cumsum(np.exp(logp), axis=1)
        u = rng.random(cdf.shape[0])[:, None] * cdf[:, -1:]
        m.S = np.minimum((cdf < u).sum(axis=1), m.L).astype(np.int64)


# -----------------------------------------------------------------------------
# Driver
# -----------------------------------------------------------------------------


def init_state(
    prior: GlobalPriorSpec, ctx: SamplerContext, beta_hat: np.ndarray, sigma2: float
) -> McmcState:
    """
    Start at the flat-prior estimate: each level in its own component, the zero
    component left empty, uniform weights, psi at its expected value.
    """
    beta_hat = np.asarray(beta_hat, dtype=float).reshape(-1)
    if beta_hat.size != ctx.p:
        raise ConfigurationError(
            f"initial beta has length {beta_hat.size}, design has {ctx.p} columns",
            details={"got": int(beta_hat.size), "expected": ctx.p},
        )
    if len(prior.mixtures) != len(ctx.mixture_slices):
        raise ConfigurationError("prior and sampler context disagree on the mixtures")

    mixtures = []
    for spec, sl in zip(prior.mixtures, ctx.mixture_slices, strict=True):
        b = beta_hat[sl]
        L = spec.L
        mu = np.full(L + 1, spec.m0)
        mu[0] = 0.0
        mu[1 : min(L, b.size) + 1] = b[:L]
        S = np.minimum(np.arange(1, b.size + 1), L).astype(np.int64)
        mixtures.append(
            CovariateState(
                log_eta=np.full(L + 1, -np.log(L + 1.0)),
                mu=mu,
                psi=float(spec.expected_psi),
                S=S,
            )
        )
    return McmcState(beta=beta_hat.copy(), sigma2=float(sigma2), mixtures=mixtures)


def make_rng(seed: int | Sequence[int]) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def derive_seed(seed: int, *keys: int) -> int:
    """Independent 64-bit child seed for (seed, *keys)."""
    seq = np.random.SeedSequence([int(seed), *(int(k) for k in keys)])
    state = seq.generate_state(1, np.uint64)
    return int(state[0])


def _sweep(
    state: McmcState, ctx: SamplerContext, prior: GlobalPriorSpec, rng: np.random.Generator
) -> None:
    step_beta(state, ctx, prior, rng)
    step_sigma2(state, ctx, prior, rng)
    if prior.mixtures:
        step_eta(state, ctx, prior, rng)
        step_mu(state, ctx, prior, rng)
        step_psi(state, ctx, prior, rng)
        step_allocations(state, ctx, prior, rng)


def run_gibbs(
    ctx: SamplerContext,
    prior: GlobalPriorSpec,
    config: SamplerConfig,
    state: McmcState,
    *,
    column_map: Sequence[ColumnInfo],
    progress: IProgress | None = None,
    freeze_allocations: bool = False,
) -> McmcTrace:
    """
    Run burn-in plus `iterations * thin` sweeps from `state`; keep every thin-th draw.

    `freeze_allocations` runs only the regression steps (beta, sigma2) with the
    mixture parameters held at their current values.
    """
    rng = make_rng(config.seed)
    n_keep = config.iterations
    names = [spec.covariate for spec in prior.mixtures]

    beta = np.empty((n_keep, ctx.p))
    sigma2 = np.empty(n_keep)
    alloc = {
        n: np.empty((n_keep, sl.stop - sl.start), dtype=np.int32)
        for n, sl in zip(names, ctx.mixture_slices, strict=True)
    }
    record = config.record_mixture_params and bool(names)
    mu = eta = psi = None
    if record:
        mu = {n: np.empty((n_keep, m.L + 1)) for n, m in zip(names, state.mixtures)}
        eta = {n: np.empty((n_keep, m.L + 1)) for n, m in zip(names, state.mixtures)}
        psi = {n: np.empty(n_keep) for n in names}

    total = config.total_sweeps
    if progress is not None:
        progress.set_status(f"sampling {total} sweeps")
        progress.set_progress(value=0, maximum=total)

    kept = 0
    for it in range(total):
        if freeze_allocations:
            step_beta(state, ctx, prior, rng)
            step_sigma2(state, ctx, prior, rng)
        else:
            _sweep(state, ctx, prior, rng)

        if it >= config.burn_in and (it - config.burn_in) % config.thin == 0:
            beta[kept] = state.beta
            sigma2[kept] = state.sigma2
            for n, m in zip(names, state.mixtures, strict=True):
                alloc[n][kept] = m.S
                if record:
                    mu[n][kept] = m.mu
                    eta[n][kept] = m.eta
                    psi[n][kept] = m.psi
            kept += 1
        if progress is not None:
            progress.set_progress(value=it + 1)

    state.check()
    return McmcTrace(
        beta=beta,
        sigma2=sigma2,
        allocations=alloc,
        column_map=tuple(column_map),
        burn_in=config.burn_in,
        seed=int(config.seed),
        thin=config.thin,
        mu=mu,
        eta=eta,
        psi=psi,
    )


def run_mcmc(
    design: DesignMatrix,
    y: np.ndarray,
    prior: GlobalPriorSpec,
    config: SamplerConfig,
    *,
    beta_hat: np.ndarray,
    sigma2_init: float,
    progress: IProgress | None = None,
) -> McmcTrace:
    """Effect-fusion sampler: regression steps then model-based clustering steps."""
    ctx = SamplerContext.from_design(design, y, prior)
    state = init_state(prior, ctx, beta_hat, sigma2_init)
    logger.info(
        "running fusion sampler: %d burn-in + %d draws (thin %d), %d mixtures, seed %d",
        config.burn_in,
        config.iterations,
        config.thin,
        len(prior.mixtures),
        config.seed,
    )
    return run_gibbs(ctx, prior, config, state, column_map=design.column_map, progress=progress)
