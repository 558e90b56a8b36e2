from __future__ import annotations

import logging
from collections.abc import Mapping
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from effectfuse.domain.errors import EffectFusionError
from effectfuse.domain.interfaces import IExporterRegistry, IReportRenderer
from effectfuse.services.design import flatten
from effectfuse.services.pipeline import FusionFit
from effectfuse.services.prior import mixture_prior_density
from effectfuse.services.report import fit_report, study_report
from effectfuse.services.simulation import StudyResult
from effectfuse.services.trace_io import allocation_frame, draws_frame, trace_arrays

logger = logging.getLogger(__name__)

_DENSITY_POINTS = 201


class OutputWriter:
    """
    Writes run artefacts through the exporter registry. Every file carries the
    same reproducibility header (version, seed, effective configuration).
    """

    def __init__(
        self,
        registry: IExporterRegistry,
        renderer: IReportRenderer,
        *,
        header: Mapping[str, Any],
    ) -> None:
        self._registry = registry
        self._renderer = renderer
        self.header = dict(header)
        self.written: list[Path] = []

    def _export(self, kind: str, payload: Any, path: Path) -> Path:
        self._registry.get(kind).export(payload, path, header=self.header)
        self.written.append(path)
        logger.debug("wrote %s", path)
        return path

    # ----- fit -----

    def write_fit(self, fit: FusionFit, out_dir: Path, *, nu: float, save_trace: bool = False):
        out_dir = Path(out_dir)
        labels = fit.element_labels()

        self._export("json", {"prior": fit.prior.to_dict()}, out_dir / "prior.json")
        for mix in fit.prior.mixtures:
            b = fit.beta_hat[fit.design.covariate_slice(mix.covariate)]
            lo, hi = float(min(b.min(), 0.0)), float(max(b.max(), 0.0))
            pad = 4.0 * float(np.sqrt(mix.expected_psi))
            grid = np.linspace(lo - pad, hi + pad, _DENSITY_POINTS)
            density = pd.DataFrame({"x": grid, "density": mixture_prior_density(mix, b, grid)})
            self._export("csv", density, out_dir / f"prior_density_{mix.covariate}.csv")

        self._export(
            "json",
            {
                "draws": fit.trace.n_draws,
                "burn_in": fit.trace.burn_in,
                "thin": fit.trace.thin,
                "group_counts": {
                    name: {str(k): v for k, v in sorted(d.items())}
                    for name, d in fit.group_counts.items()
                },
            },
            out_dir / "trace_summary.json",
        )

        for name, acc in fit.cocluster.items():
            C = pd.DataFrame(acc.similarity(), columns=list(labels[name]))
            C.insert(0, "level", list(labels[name]))
            self._export("csv", C, out_dir / f"cocluster_{name}.csv")

        partitions: dict[str, Any] = {}
        for name in fit.trace.covariates:
            entry: dict[str, Any] = {}
            if name in fit.most:
                r = fit.most[name]
                entry["most"] = {
                    **r.partition.to_dict(labels[name]),
                    "frequency": r.frequency,
                    "share": r.share,
                    "tied": [p.to_dict(labels[name]) for p in r.tied],
                }
            if name in fit.pam:
                s = fit.pam[name]
                entry["pam"] = {
                    **s.partition.to_dict(labels[name]),
                    "k": s.k,
                    "silhouette": s.silhouette,
                    "silhouettes": {str(k): v for k, v in s.silhouettes.items()},
                    "one_cluster_suspected": s.one_cluster_suspected,
                }
            partitions[name] = entry
        self._export("json", {"nu": nu, "partitions": partitions}, out_dir / "partitions.json")

        for strategy, model in fit.models.items():
            self._export("json", model.summary.to_dict(), out_dir / f"refit_{strategy}.json")
            self._export("csv", model.summary.to_frame(), out_dir / f"refit_{strategy}.csv")
            expanded = pd.DataFrame(
                {"coefficient": fit.design.labels, "estimate": flatten(model.estimates)}
            )
            self._export("csv", expanded, out_dir / f"estimates_{strategy}.csv")

        averaged = pd.DataFrame(
            {"coefficient": fit.design.labels, "estimate": flatten(fit.averaged)}
        )
        self._export(
            "json",
            {"estimates": averaged.to_dict(orient="records")},
            out_dir / "model_averaged.json",
        )
        if fit.full is not None:
            self._export("json", fit.full.summary.to_dict(), out_dir / "refit_full.json")

        if save_trace:
            self._export("npz", trace_arrays(fit.trace), out_dir / "trace.npz")
            self._export("csv", draws_frame(fit.trace), out_dir / "trace_draws.csv")
            for name in fit.trace.covariates:
                self._export(
                    "csv",
                    allocation_frame(fit.trace, name, labels[name]),
                    out_dir / f"trace_allocations_{name}.csv",
                )

        md = fit_report(fit, nu=nu, header=self.header)
        html = self._renderer.to_html(md, title=f"fit nu={nu:g}")
        self._export("html", html, out_dir / "report.html")
        return list(self.written)

    # ----- simulate -----

    def write_study(self, result: StudyResult, out_dir: Path):
        out_dir = Path(out_dir)
        self._export("csv", result.cluster_table(), out_dir / "cluster_table.csv")
        self._export("csv", result.criteria_table(), out_dir / "criteria_table.csv")
        self._export("csv", result.mse_curves(), out_dir / "mse_curves.csv")
        self._export("csv", result.cluster, out_dir / "cluster_rows.csv")
        self._export("csv", result.criteria, out_dir / "criteria_rows.csv")
        self._export(
            "json",
            {"design": result.design.describe(), "failures": result.failures},
            out_dir / "study.json",
        )
        md = study_report(result, header=self.header)
        html = self._renderer.to_html(md, title="simulation study")
        self._export("html", html, out_dir / "report.html")
        return list(self.written)

    # ----- errors -----

    def write_error(self, err: EffectFusionError, out_dir: Path) -> Path:
        return self._export("json", {"error": err.to_dict()}, Path(out_dir) / "error.json")
