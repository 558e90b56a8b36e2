from __future__ import annotations

import logging
from collections.abc import Mapping, Sequence
from pathlib import Path

import numpy as np
import pandas as pd

from effectfuse.domain.errors import ConfigurationError, DataValidationError
from effectfuse.domain.models import (
    CategoricalCovariate,
    CoefficientVector,
    ColumnInfo,
    ContinuousCovariate,
    Dataset,
    DesignMatrix,
)

logger = logging.getLogger(__name__)


def build_design(data: Dataset) -> DesignMatrix:
    """
    Dummy-code a dataset.

    Column order: intercept, then each categorical covariate in declaration order
    with its levels in label order (baseline skipped), then continuous columns.
    """
    if data.n == 0:
        raise DataValidationError("dataset is empty")

    n = data.n
    blocks: list[np.ndarray] = [np.ones((n, 1))]
    column_map: list[ColumnInfo] = [ColumnInfo("intercept")]

    for cov in data.categorical:
        effect_levels = cov.effect_level_indices
        block = (cov.observations[:, None] == np.asarray(effect_levels)[None, :]).astype(float)
        blocks.append(block)
        column_map.extend(ColumnInfo("dummy", cov.name, cov.levels[k]) for k in effect_levels)

    for cont in data.continuous:
        blocks.append(cont.values[:, None])
        column_map.append(ColumnInfo("continuous", cont.name))

    return DesignMatrix(matrix=np.hstack(blocks), column_map=tuple(column_map))


# -----------------------------------------------------------------------------
# Coefficient layout
# -----------------------------------------------------------------------------


def flatten(coefs: CoefficientVector) -> np.ndarray:
    return np.concatenate([[coefs.beta0], *coefs.beta, coefs.gamma])


def unflatten(
    v: np.ndarray | Sequence[float], column_map: Sequence[ColumnInfo]
) -> CoefficientVector:
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size != len(column_map):
        raise DataValidationError(
            f"coefficient vector has length {v.size}, layout expects {len(column_map)}",
            details={"got": int(v.size), "expected": len(column_map)},
        )
    if not column_map or column_map[0].kind != "intercept":
        raise DataValidationError("column map must start with the intercept")

    beta: list[list[float]] = []
    current: str | None = None
    gamma: list[float] = []
    for value, col in zip(v[1:], column_map[1:], strict=True):
        if col.kind == "dummy":
            if col.covariate != current:
                beta.append([])
                current = col.covariate
            beta[-1].append(float(value))
        elif col.kind == "continuous":
            gamma.append(float(value))
        else:
            raise DataValidationError("only the first column may be the intercept")

    return CoefficientVector(
        beta0=float(v[0]), beta=tuple(np.asarray(b) for b in beta), gamma=np.asarray(gamma)
    )


# -----------------------------------------------------------------------------
# CSV ingestion
# -----------------------------------------------------------------------------


def _level_order(values: Sequence[str]) -> list[str]:
    """Numeric labels sort numerically, anything else lexicographically."""
    uniq = list(dict.fromkeys(values))
    try:
        return sorted(uniq, key=float)
    except ValueError:
        return sorted(uniq)


def categorical_from_labels(
    name: str, labels: Sequence[str], *, baseline: str | None = None
) -> CategoricalCovariate:
    labels = [str(x) for x in labels]
    levels = _level_order(labels)
    if baseline is None:
        baseline_index = 0
    else:
        if str(baseline) not in levels:
            raise ConfigurationError(
                f"baseline '{baseline}' is not a level of '{name}'",
                details={"covariate": name, "baseline": str(baseline)},
            )
        baseline_index = levels.index(str(baseline))
    lookup = {lab: i for i, lab in enumerate(levels)}
    obs = np.fromiter((lookup[x] for x in labels), dtype=np.int64, count=len(labels))
    return CategoricalCovariate(
        name=name, levels=tuple(levels), observations=obs, baseline_index=baseline_index
    )


def load_dataset_csv(
    path: Path,
    *,
    response: str,
    categorical: Mapping[str, str | None],
    continuous: Sequence[str] = (),
) -> Dataset:
    """
    Read a CSV with a header row into a Dataset.

    `categorical` maps column name to an optional baseline label. Records with
    missing values in any used column are rejected (complete-case data only).
    """
    try:
        frame = pd.read_csv(path, dtype={name: str for name in categorical})
    except FileNotFoundError as e:
        raise ConfigurationError(
            f"input file not found: {path}", details={"path": str(path)}
        ) from e
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataValidationError(
            f"cannot parse CSV {path}: {e}", details={"path": str(path)}
        ) from e

    used = [response, *categorical, *continuous]
    for col in used:
        if col not in frame.columns:
            raise ConfigurationError(
                f"column '{col}' not found in {path.name}",
                details={"column": col, "available": [str(c) for c in frame.columns]},
            )

    missing = frame[used].isna().any(axis=1)
    if missing.any():
        rows = [int(i) for i in np.flatnonzero(missing.to_numpy())[:10]]
        raise DataValidationError(
            f"{int(missing.sum())} records have missing values",
            details={"rows": rows},
        )

    try:
        y = frame[response].astype(float).to_numpy()
        conts = tuple(
            ContinuousCovariate(name=c, values=frame[c].astype(float).to_numpy())
            for c in continuous
        )
    except ValueError as e:
        raise DataValidationError(f"non-numeric value in a numeric column: {e}") from e

    cats = tuple(
        categorical_from_labels(name, frame[name].tolist(), baseline=baseline)
        for name, baseline in categorical.items()
    )
    logger.info(
        "loaded %d records from %s (%d categorical, %d continuous)",
        len(frame),
        path,
        len(cats),
        len(conts),
    )
    return Dataset(response=y, categorical=cats, continuous=conts)


def dataset_to_frame(data: Dataset, *, response: str = "y") -> pd.DataFrame:
    """Inverse of `load_dataset_csv` (level labels, not indices)."""
    cols: dict[str, object] = {response: data.response}
    for cov in data.categorical:
        cols[cov.name] = np.asarray(cov.levels, dtype=object)[cov.observations]
    for cont in data.continuous:
        cols[cont.name] = cont.values
    return pd.DataFrame(cols)
