from __future__ import annotations

import os
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from effectfuse.domain.errors import ConfigurationError
from effectfuse.services.config.json_config_service import JsonConfigService
from effectfuse.services.pipeline import FusionSettings, RefitSettings
from effectfuse.services.prior import CovariatePriorOverride, PriorSettings
from effectfuse.services.sampler import SamplerConfig
from effectfuse.services.simulation import SimDesign, default_design, desk_scale_design
from effectfuse.utils.constants import (
    DEFAULT_B0,
    DEFAULT_BURN_IN,
    DEFAULT_E0,
    DEFAULT_G0,
    DEFAULT_ITERATIONS,
    DEFAULT_NU,
    ENV_THREADS,
    STRATEGIES,
)


@dataclass(frozen=True)
class CliOverrides:
    """Command-line values; None means 'not given'."""

    input: Path | None = None
    seed: int | None = None
    nu: str | None = None
    psi_mode: str | None = None
    strategy: str | None = None
    iterations: int | None = None
    burn_in: int | None = None
    out: Path | None = None
    desk_scale: bool = False
    replications: int | None = None
    save_trace: bool | None = None


# -----------------------------------------------------------------------------
# Parsers
# -----------------------------------------------------------------------------


def parse_nu_list(value: str | float | Sequence[Any]) -> tuple[float, ...]:
    items = value.split(",") if isinstance(value, str) else value
    if isinstance(items, (int, float)):
        items = [items]
    try:
        out = tuple(float(str(v).strip()) for v in items if str(v).strip())
    except ValueError as e:
        raise ConfigurationError(
            f"cannot parse nu values {value!r}", details={"nu": str(value)}
        ) from e
    if not out:
        raise ConfigurationError("no nu value given")
    bad = [v for v in out if not v > 0]
    if bad:
        raise ConfigurationError(f"nu must be positive, got {bad}", details={"nu": list(out)})
    return out


def parse_strategy(value: str) -> tuple[str, ...]:
    v = value.strip().lower()
    if v == "both":
        return STRATEGIES
    if v in STRATEGIES:
        return (v,)
    raise ConfigurationError(
        f"strategy must be most, pam or both, got {value!r}", details={"strategy": value}
    )


def parse_psi_modes(value: str | Sequence[str]) -> tuple[str, ...]:
    if isinstance(value, str):
        items = value.split(",")
    elif isinstance(value, (list, tuple)):
        items = list(value)
    else:
        raise ConfigurationError(
            f"psi mode must be a string or a list, got {value!r}", details={"psi_mode": repr(value)}
        )
    modes = tuple(str(m).strip().lower() for m in items if str(m).strip())
    bad = [m for m in modes if m not in ("fixed", "random")]
    if bad or not modes:
        raise ConfigurationError(
            f"psi mode must be fixed or random, got {value!r}", details={"psi_mode": str(value)}
        )
    return modes


def _override_number(name: str, o: Mapping[str, Any], key: str) -> float | None:
    if key not in o:
        return None
    try:
        if isinstance(o[key], bool):
            raise TypeError(o[key])
        return float(o[key])
    except (TypeError, ValueError) as e:
        raise ConfigurationError(
            f"[prior].overrides.{name}.{key} must be a number, got {o[key]!r}",
            details={"covariate": name, "key": key, "value": repr(o[key])},
        ) from e


def _single_psi_mode(value: Any, where: str) -> str:
    modes = parse_psi_modes(value)
    if len(modes) != 1:
        raise ConfigurationError(
            f"{where} takes one psi mode, got {list(modes)}", details={"psi_mode": list(modes)}
        )
    return modes[0]


def parse_categorical(value: Any) -> dict[str, str | None]:
    """A list of column names, or a mapping of column name to baseline label (or null)."""
    if isinstance(value, Mapping):
        return {str(k): (None if v is None else str(v)) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return {str(k): None for k in value}
    raise ConfigurationError(
        "[data].categorical must be a list or an object", details={"value": repr(value)}
    )


def worker_count(environ: Mapping[str, str] | None = None) -> int:
    env = os.environ if environ is None else environ
    raw = env.get(ENV_THREADS)
    if raw is None or raw.strip() == "":
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError as e:
        raise ConfigurationError(
            f"{ENV_THREADS} must be a positive integer, got {raw!r}", details={ENV_THREADS: raw}
        ) from e
    if n < 1:
        raise ConfigurationError(
            f"{ENV_THREADS} must be a positive integer, got {raw!r}", details={ENV_THREADS: raw}
        )
    return n


# -----------------------------------------------------------------------------
# Shared sections
# -----------------------------------------------------------------------------


def _prior_settings(cfg: JsonConfigService, cli: CliOverrides) -> PriorSettings:
    overrides: dict[str, CovariatePriorOverride] = {}
    raw = cfg.get("prior", "overrides", {}) or {}
    if not isinstance(raw, Mapping):
        raise ConfigurationError("[prior].overrides must be an object")
    for name, o in raw.items():
        if not isinstance(o, Mapping):
            raise ConfigurationError(f"[prior].overrides.{name} must be an object")
        unknown = set(o) - {"nu", "e0", "psi_mode", "g0"}
        if unknown:
            raise ConfigurationError(
                f"unknown prior override keys for '{name}': {sorted(unknown)}",
                details={"covariate": name, "keys": sorted(unknown)},
            )
        mode = _single_psi_mode(o["psi_mode"], f"override '{name}'") if "psi_mode" in o else None
        overrides[str(name)] = CovariatePriorOverride(
            nu=parse_nu_list(o["nu"])[0] if "nu" in o else None,
            e0=_override_number(str(name), o, "e0"),
            psi_mode=mode,  # type: ignore[arg-type]
            g0=_override_number(str(name), o, "g0"),
        )

    psi_mode = cli.psi_mode or cfg.get("prior", "psi_mode", "fixed")
    return PriorSettings(
        nu=DEFAULT_NU,
        e0=cfg.get_float("prior", "e0", DEFAULT_E0),
        psi_mode=_single_psi_mode(psi_mode, "fit"),  # type: ignore[arg-type]
        g0=cfg.get_float("prior", "g0", DEFAULT_G0),
        B0=cfg.get_float("prior", "B0", DEFAULT_B0),
        global_psi=bool(cfg.get_bool("prior", "global_psi", False)),
        overrides=overrides,
    )


def _sampler_config(cfg: JsonConfigService, cli: CliOverrides, *, burn_in: int, iterations: int):
    seed = cli.seed if cli.seed is not None else cfg.get_int("sampler", "seed", 0)
    return SamplerConfig(
        burn_in=(
            cli.burn_in if cli.burn_in is not None else cfg.get_int("sampler", "burn_in", burn_in)
        ),
        iterations=(
            cli.iterations
            if cli.iterations is not None
            else cfg.get_int("sampler", "iterations", iterations)
        ),
        seed=int(seed),
        thin=cfg.get_int("sampler", "thin", 1),
        record_mixture_params=bool(cfg.get_bool("sampler", "record_mixture_params", False)),
    )


def _refit_settings(cfg: JsonConfigService, default: RefitSettings | None = None) -> RefitSettings:
    d = default or RefitSettings()
    r = RefitSettings(
        B0=cfg.get_float("refit", "B0", d.B0),
        iterations=cfg.get_int("refit", "iterations", d.iterations),
        burn_in=cfg.get_int("refit", "burn_in", d.burn_in),
    )
    if r.iterations < 10 or r.burn_in < 0 or not r.B0 > 0:
        raise ConfigurationError(
            "refit needs >= 10 iterations, burn_in >= 0 and B0 > 0", details=vars(r)
        )
    return r


def _k_max(cfg: JsonConfigService) -> int | None:
    k = cfg.get_int("selection", "k_max", None)
    if k is not None and k < 2:
        raise ConfigurationError(f"[selection].k_max must be >= 2, got {k}")
    return k


# -----------------------------------------------------------------------------
# fit
# -----------------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    input: Path
    response: str
    categorical: Mapping[str, str | None]
    continuous: tuple[str, ...]
    prior: PriorSettings
    nu_values: tuple[float, ...]
    sampler: SamplerConfig
    refit: RefitSettings
    strategies: tuple[str, ...]
    k_max: int | None
    out: Path
    progress_every: int = 1000
    save_trace: bool = False
    loaded_from: Path | None = None

    def fusion_settings(self, nu: float) -> FusionSettings:
        return FusionSettings(
            prior=replace(self.prior, nu=nu),
            sampler=self.sampler,
            refit=self.refit,
            strategies=self.strategies,
            k_max=self.k_max,
        )

    def snapshot(self) -> dict[str, Any]:
        """Effective configuration, as recorded in every output header."""
        return {
            "data": {
                "input": self.input.name,
                "response": self.response,
                "categorical": dict(self.categorical),
                "continuous": list(self.continuous),
            },
            "prior": {
                "nu": list(self.nu_values),
                "e0": self.prior.e0,
                "psi_mode": self.prior.psi_mode,
                "g0": self.prior.g0,
                "B0": self.prior.B0,
                "global_psi": self.prior.global_psi,
                "overrides": {k: vars(v) for k, v in self.prior.overrides.items()},
            },
            "sampler": vars(self.sampler),
            "refit": vars(self.refit),
            "selection": {"strategies": list(self.strategies), "k_max": self.k_max},
        }


def build_run_config(cfg: JsonConfigService, cli: CliOverrides) -> RunConfig:
    """CLI flag > JSON document > built-in default."""
    raw_input = cli.input if cli.input is not None else cfg.get("data", "input")
    if raw_input is None:
        raise ConfigurationError("no input CSV given ([data].input or --input)")
    input_path = Path(raw_input) if cli.input is not None else cfg.resolve_path(raw_input)

    response = cfg.get("data", "response")
    if not response:
        raise ConfigurationError("[data].response is required")
    categorical = parse_categorical(cfg.get("data", "categorical", []))
    if not categorical:
        raise ConfigurationError("[data].categorical must name at least one column")
    continuous = tuple(str(c) for c in (cfg.get_list("data", "continuous", []) or []))

    nu_raw = cli.nu if cli.nu is not None else cfg.get("prior", "nu", DEFAULT_NU)
    strategy = cli.strategy or cfg.get("selection", "strategy", "both")

    out_raw = cli.out if cli.out is not None else cfg.get("output", "directory", "effectfuse-out")
    out = Path(out_raw) if cli.out is not None else cfg.resolve_path(out_raw)

    save_trace = (
        cli.save_trace
        if cli.save_trace is not None
        else bool(cfg.get_bool("output", "save_trace", False))
    )
    progress_every = cfg.get_int("output", "progress_every", 1000)
    if progress_every < 1:
        raise ConfigurationError(f"[output].progress_every must be >= 1, got {progress_every}")

    return RunConfig(
        input=input_path,
        response=str(response),
        categorical=categorical,
        continuous=continuous,
        prior=_prior_settings(cfg, cli),
        nu_values=parse_nu_list(nu_raw),
        sampler=_sampler_config(cfg, cli, burn_in=DEFAULT_BURN_IN, iterations=DEFAULT_ITERATIONS),
        refit=_refit_settings(cfg),
        strategies=parse_strategy(str(strategy)),
        k_max=_k_max(cfg),
        out=out,
        progress_every=progress_every,
        save_trace=save_trace,
        loaded_from=cfg.loaded_from,
    )


# -----------------------------------------------------------------------------
# simulate
# -----------------------------------------------------------------------------


@dataclass(frozen=True)
class SimulateConfig:
    design: SimDesign
    out: Path
    max_workers: int = 1
    progress_every: int = 1
    extras: Mapping[str, Any] = field(default_factory=dict)

    def snapshot(self) -> dict[str, Any]:
        return {"simulation": self.design.describe(), **dict(self.extras)}


def build_simulate_config(
    cfg: JsonConfigService,
    cli: CliOverrides,
    *,
    environ: Mapping[str, str] | None = None,
) -> SimulateConfig:
    preset = "desk" if cli.desk_scale else str(cfg.get("simulation", "preset", "default"))
    if preset not in ("default", "desk"):
        raise ConfigurationError(f"[simulation].preset must be default or desk, got {preset!r}")
    base = desk_scale_design() if preset == "desk" else default_design()

    sampler = _sampler_config(cfg, cli, burn_in=base.burn_in, iterations=base.iterations)
    nu_raw = cli.nu if cli.nu is not None else cfg.get("simulation", "nu_grid", None)
    modes_raw = cli.psi_mode or cfg.get("simulation", "psi_modes", None)
    seed = cli.seed if cli.seed is not None else cfg.get_int("simulation", "seed", sampler.seed)
    reps = (
        cli.replications
        if cli.replications is not None
        else cfg.get_int("simulation", "replications", base.replications)
    )

    design = replace(
        base,
        replications=reps,
        n=cfg.get_int("simulation", "n", base.n),
        n_new=cfg.get_int("simulation", "n_new", base.n_new),
        noise=cfg.get_float("simulation", "noise", base.noise),
        noise_is_variance=bool(
            cfg.get_bool("simulation", "noise_is_variance", base.noise_is_variance)
        ),
        nu_grid=parse_nu_list(nu_raw) if nu_raw is not None else base.nu_grid,
        psi_modes=parse_psi_modes(modes_raw) if modes_raw is not None else base.psi_modes,
        seed=int(seed),
        burn_in=sampler.burn_in,
        iterations=sampler.iterations,
        thin=sampler.thin,
        refit=_refit_settings(cfg, base.refit),
        k_max=_k_max(cfg),
    )

    out_raw = cli.out if cli.out is not None else cfg.get("output", "directory", "effectfuse-study")
    out = Path(out_raw) if cli.out is not None else cfg.resolve_path(out_raw)
    return SimulateConfig(
        design=design,
        out=out,
        max_workers=worker_count(environ),
        progress_every=cfg.get_int("output", "progress_every", 1),
        extras={"preset": preset},
    )


__all__ = [
    "CliOverrides",
    "RunConfig",
    "SimulateConfig",
    "build_run_config",
    "build_simulate_config",
    "parse_nu_list",
    "parse_psi_modes",
    "parse_strategy",
    "worker_count",
]
