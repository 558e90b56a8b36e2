from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import numpy as np

from effectfuse import __version__
from effectfuse.di.container import Container
from effectfuse.domain.errors import EffectFusionError, NumericalError
from effectfuse.services.config.run_config import (
    CliOverrides,
    RunConfig,
    build_run_config,
    build_simulate_config,
)
from effectfuse.services.design import load_dataset_csv
from effectfuse.services.pipeline import fit_effect_fusion
from effectfuse.services.simulation import run_study
from effectfuse.utils.constants import APP_NAME

logger = logging.getLogger(APP_NAME)

EXIT_OK = 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON config document")
    p.add_argument("--seed", type=int, help="unsigned 64-bit master seed")
    p.add_argument("--nu", help="comma-separated nu values, e.g. 100,1000")
    p.add_argument("--psi-mode", dest="psi_mode", help="fixed or random (comma list for simulate)")
    p.add_argument("--iterations", type=int, help="retained sweeps")
    p.add_argument("--burnin", dest="burn_in", type=int, help="discarded sweeps")
    p.add_argument("--out", type=Path, help="output directory")
    verbosity = p.add_mutually_exclusive_group()
    verbosity.add_argument("--quiet", action="store_true", help="errors only, no progress")
    verbosity.add_argument("--verbose", action="store_true", help="debug logging")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=APP_NAME,
        description="Bayesian effect fusion for categorical predictors in linear regression.",
    )
    parser.add_argument("--version", action="version", version=f"{APP_NAME} {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit a CSV dataset and select fused partitions")
    _add_common(fit)
    fit.add_argument("--input", type=Path, help="CSV file (overrides [data].input)")
    fit.add_argument("--strategy", help="most, pam or both")
    fit.add_argument(
        "--save-trace", dest="save_trace", action="store_true", default=None, help="export draws"
    )

    sim = sub.add_parser("simulate", help="run the simulation study")
    _add_common(sim)
    sim.add_argument("--desk-scale", dest="desk_scale", action="store_true")
    sim.add_argument("--replications", type=int)
    return parser


def configure_logging(*, quiet: bool = False, verbose: bool = False) -> None:
    level = logging.ERROR if quiet else (logging.DEBUG if verbose else logging.INFO)
    logging.basicConfig(
        level=level,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )


def _overrides(args: argparse.Namespace) -> CliOverrides:
    return CliOverrides(
        input=getattr(args, "input", None),
        seed=args.seed,
        nu=args.nu,
        psi_mode=args.psi_mode,
        strategy=getattr(args, "strategy", None),
        iterations=args.iterations,
        burn_in=args.burn_in,
        out=args.out,
        desk_scale=bool(getattr(args, "desk_scale", False)),
        replications=getattr(args, "replications", None),
        save_trace=getattr(args, "save_trace", None),
    )


def _header(seed: int, config: dict[str, Any]) -> dict[str, Any]:
    return {"version": __version__, "seed": seed, "config": config}


# -----------------------------------------------------------------------------
# Commands
# -----------------------------------------------------------------------------


def cmd_fit(cfg: RunConfig, container: Container, *, quiet: bool = False) -> int:
    data = load_dataset_csv(
        cfg.input,
        response=cfg.response,
        categorical=cfg.categorical,
        continuous=cfg.continuous,
    )
    for nu in cfg.nu_values:
        out_dir = cfg.out if len(cfg.nu_values) == 1 else cfg.out / f"nu_{nu:g}"
        snapshot = cfg.snapshot()
        snapshot["prior"]["nu"] = nu
        writer = container.build_output_writer(_header(cfg.sampler.seed, snapshot))
        progress = container.build_progress(quiet=quiet, every=cfg.progress_every)

        logger.info("fitting nu=%g into %s", nu, out_dir)
        fit = fit_effect_fusion(data, cfg.fusion_settings(nu), progress=progress)
        writer.write_fit(fit, out_dir, nu=nu, save_trace=cfg.save_trace)

        for strategy, model in fit.models.items():
            groups = " ".join(f"{k}={v}" for k, v in model.fused.group_counts().items())
            print(
                f"nu={nu:g} {strategy}: groups {groups} "
                f"DIC={model.summary.dic.dic:.2f} BICmcmc={model.summary.bic.bic:.2f}"
            )
    return EXIT_OK


def cmd_simulate(container: Container, cli: CliOverrides, *, quiet: bool = False) -> int:
    scfg = build_simulate_config(container.config, cli)
    writer = container.build_output_writer(_header(scfg.design.seed, scfg.snapshot()))
    progress = container.build_progress(quiet=quiet, every=scfg.progress_every)
    result = run_study(scfg.design, max_workers=scfg.max_workers, progress=progress)
    writer.write_study(result, scfg.out)
    if result.cluster.empty and result.failures:
        raise NumericalError(
            "every study cell failed", details={"failures": len(result.failures)}
        )
    print(
        f"{scfg.design.replications} replications x {len(scfg.design.cells())} cells -> {scfg.out}"
        + (f" ({len(result.failures)} failed)" if result.failures else "")
    )
    return EXIT_OK


# -----------------------------------------------------------------------------
# Entry point
# -----------------------------------------------------------------------------


def _report_error(err: EffectFusionError, container: Container | None, out: Path | None) -> int:
    print(json.dumps(err.to_dict(), default=str), file=sys.stderr)
    if container is not None and out is not None:
        try:
            container.build_output_writer(_header(0, {})).write_error(err, out)
        except OSError as e:
            logger.debug("cannot write error.json to %s: %s", out, e)
    return err.exit_code


def run_cli(argv: Sequence[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as e:
        return int(e.code or 0)

    configure_logging(quiet=args.quiet, verbose=args.verbose)
    cli = _overrides(args)
    container: Container | None = None
    out: Path | None = args.out
    try:
        container = Container.default(explicit_config=args.config)
        if args.command == "fit":
            cfg = build_run_config(container.config, cli)
            out = cfg.out
            return cmd_fit(cfg, container, quiet=args.quiet)
        return cmd_simulate(container, cli, quiet=args.quiet)
    except EffectFusionError as e:
        logger.error("%s", e.message)
        return _report_error(e, container, out)
    except np.linalg.LinAlgError as e:
        logger.error("linear algebra failure: %s", e)
        return _report_error(NumericalError(str(e)), container, out)
    except OSError as e:
        logger.error("I/O failure: %s", e)
        return _report_error(EffectFusionError(f"I/O failure: {e}"), container, out)
    except Exception as e:
        logger.exception("unexpected failure")
        err = EffectFusionError(f"unexpected failure: {e}", details={"type": type(e).__name__})
        return _report_error(err, container, out)
