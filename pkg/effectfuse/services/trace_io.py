from __future__ import annotations

from collections.abc import Mapping, Sequence
from pathlib import Path

import numpy as np
import pandas as pd

from effectfuse.domain.errors import DataValidationError
from effectfuse.services.sampler import McmcTrace


def draws_frame(trace: McmcTrace) -> pd.DataFrame:
    """One row per retained draw: beta by column label, then sigma2."""
    frame = pd.DataFrame(np.asarray(trace.beta), columns=trace.labels)
    frame.insert(0, "draw", np.arange(trace.n_draws))
    frame["sigma2"] = np.asarray(trace.sigma2)
    return frame


def allocation_frame(
    trace: McmcTrace, covariate: str, element_labels: Sequence[str] | None = None
) -> pd.DataFrame:
    """Component indicator per draw for the non-baseline levels of one covariate."""
    try:
        S = np.asarray(trace.allocations[covariate])
    except KeyError as e:
        raise DataValidationError(
            f"trace has no allocations for '{covariate}'", details={"covariate": covariate}
        ) from e
    names = list(element_labels[1:]) if element_labels is not None else None
    if names is None or len(names) != S.shape[1]:
        names = [f"level_{k}" for k in range(1, S.shape[1] + 1)]
    frame = pd.DataFrame(S, columns=names)
    frame.insert(0, "draw", np.arange(S.shape[0]))
    return frame


def trace_arrays(trace: McmcTrace) -> dict[str, np.ndarray]:
    """Flat name -> array mapping for an .npz archive."""
    out: dict[str, np.ndarray] = {
        "beta": np.asarray(trace.beta),
        "sigma2": np.asarray(trace.sigma2),
        "labels": np.asarray(trace.labels),
        "burn_in": np.asarray(trace.burn_in),
        "thin": np.asarray(trace.thin),
    }
    for name, S in trace.allocations.items():
        out[f"S__{name}"] = np.asarray(S)
    for kind in ("mu", "eta", "psi"):
        d = getattr(trace, kind)
        if d:
            for name, arr in d.items():
                out[f"{kind}__{name}"] = np.asarray(arr)
    return out


def load_trace_arrays(path: Path) -> dict[str, Mapping[str, np.ndarray] | np.ndarray]:
    """Read back an archive written from `trace_arrays`; per-covariate arrays are regrouped."""
    with np.load(path, allow_pickle=False) as archive:
        flat = {k: archive[k] for k in archive.files}
    grouped: dict[str, Mapping[str, np.ndarray] | np.ndarray] = {}
    nested: dict[str, dict[str, np.ndarray]] = {}
    for key, arr in flat.items():
        if "__" in key:
            kind, name = key.split("__", 1)
            nested.setdefault(kind, {})[name] = arr
        else:
            grouped[key] = arr
    grouped.update(nested)
    return grouped
