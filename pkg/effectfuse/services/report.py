from __future__ import annotations

import math
from collections.abc import Mapping
from typing import Any

import pandas as pd

from effectfuse.services.pipeline import FusionFit
from effectfuse.services.simulation import StudyResult
from effectfuse.utils.constants import APP_NAME


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return "" if math.isnan(value) else f"{value:.4g}"
    return str(value).replace("|", "\\|")


def markdown_table(frame: pd.DataFrame) -> str:
    """Pipe table for the `extra` Markdown extension."""
    if frame.empty:
        return "_no rows_\n"
    cols = [str(c) for c in frame.columns]
    lines = ["| " + " | ".join(cols) + " |", "|" + "|".join("---" for _ in cols) + "|"]
    for row in frame.itertuples(index=False):
        lines.append("| " + " | ".join(_cell(v) for v in row) + " |")
    return "\n".join(lines) + "\n"


def _partition_text(blocks: list[dict[str, Any]]) -> str:
    parts = []
    for b in blocks:
        members = ", ".join(str(m) for m in b["members"])
        parts.append(f"**{{{members}}}**" if b["zero_block"] else f"{{{members}}}")
    return " ".join(parts)


def _header_block(header: Mapping[str, Any]) -> list[str]:
    return [
        f"- version: `{header.get('version', '')}`",
        f"- seed: `{header.get('seed')}`",
    ]


def fit_report(fit: FusionFit, *, nu: float, header: Mapping[str, Any]) -> str:
    """Markdown summary of one effect-fusion run."""
    labels = fit.element_labels()
    out = [f"# {APP_NAME} fit (nu = {nu:g})", ""]
    out += _header_block(header)
    out += [
        f"- observations: {fit.data.n}",
        f"- design columns: {fit.design.n_columns}",
        f"- retained draws: {fit.trace.n_draws} (burn-in {fit.trace.burn_in})",
        "",
        "Blocks in **bold** are fused with the baseline level.",
        "",
    ]

    for name in fit.trace.covariates:
        out += [f"## {name}", ""]
        mix = fit.prior.mixture(name)
        line = (
            f"Prior: {mix.L} components, e0 = {mix.e0:g}, psi {mix.psi_mode}"
            f" (E psi = {mix.expected_psi:.4g}), M0 = {mix.M0:.4g}"
        )
        if mix.flags:
            line += f"; flags: {', '.join(mix.flags)}"
        out += [line, ""]
        counts = fit.group_counts[name]
        dist = pd.DataFrame(
            {"groups": list(counts), "draws": list(counts.values())}
        ).sort_values("groups")
        out += ["Number of groups over the retained draws:", "", markdown_table(dist)]
        if name in fit.most:
            r = fit.most[name]
            text = _partition_text(r.partition.to_dict(labels[name])["blocks"])
            tie = f", tied with {len(r.tied)} other(s)" if r.is_tie else ""
            out += [f"- most frequent ({r.share:.1%} of draws{tie}): {text}"]
        if name in fit.pam:
            s = fit.pam[name]
            text = _partition_text(s.partition.to_dict(labels[name])["blocks"])
            note = " (one cluster suspected)" if s.one_cluster_suspected else ""
            out += [f"- PAM, k = {s.k}, silhouette {s.silhouette:.3f}{note}: {text}"]
        out.append("")

    out += ["## Refitted models", ""]
    rows = []
    for strategy, model in fit.models.items():
        rows.append(
            {
                "model": strategy,
                "groups": ", ".join(f"{k}={v}" for k, v in model.fused.group_counts().items()),
                "DIC": model.summary.dic.dic,
                "pD": model.summary.dic.p_d,
                "BICmcmc": model.summary.bic.bic,
            }
        )
    if fit.full is not None:
        rows.append(
            {
                "model": "full",
                "groups": ", ".join(f"{k}={v}" for k, v in fit.full.summary.group_counts.items()),
                "DIC": fit.full.summary.dic.dic,
                "pD": fit.full.summary.dic.p_d,
                "BICmcmc": fit.full.summary.bic.bic,
            }
        )
    out += [markdown_table(pd.DataFrame(rows)), ""]

    for strategy, model in fit.models.items():
        out += [f"### {strategy}", "", markdown_table(model.summary.to_frame()), ""]
    return "\n".join(out)


def study_report(result: StudyResult, *, header: Mapping[str, Any]) -> str:
    """Markdown summary of a simulation study."""
    d = result.design
    out = [f"# {APP_NAME} simulation study", ""]
    out += _header_block(header)
    out += [
        f"- replications: {d.replications}, n = {d.n}, n_new = {d.n_new}",
        f"- noise {'variance' if d.noise_is_variance else 'sd'}: {d.noise:g}",
        f"- nu grid: {', '.join(f'{v:g}' for v in d.nu_grid)}",
        f"- psi modes: {', '.join(d.psi_modes)}",
        f"- sweeps: {d.burn_in} burn-in + {d.iterations} kept",
        "",
        "## Clustering",
        "",
        markdown_table(result.cluster_table()),
        "",
        "## Model criteria and prediction",
        "",
        markdown_table(result.criteria_table()),
        "",
    ]
    if result.failures:
        out += [f"## Failures ({len(result.failures)})", ""]
        fails = pd.DataFrame(result.failures)[["rep", "nu", "psi_mode", "error", "message"]]
        out += [markdown_table(fails), ""]
    return "\n".join(out)
