from __future__ import annotations

import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from effectfuse.domain.errors import DataValidationError

logger = logging.getLogger(__name__)

ColumnKind = Literal["intercept", "dummy", "continuous"]


def readonly_array(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


# -----------------------------------------------------------------------------
# Covariates and datasets
# -----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CategoricalCovariate:
    """
    A nominal covariate with levels `0..c_j` (in declaration order).

    `observations` holds one level index per record. The baseline gets no dummy
    column; every other level must be observed at least once.
    """

    name: str
    levels: tuple[str, ...]
    observations: np.ndarray
    baseline_index: int = 0

    def __post_init__(self) -> None:
        levels = tuple(str(x) for x in self.levels)
        object.__setattr__(self, "levels", levels)

        if len(levels) < 2:
            raise DataValidationError(
                f"covariate '{self.name}' needs at least two levels",
                details={"covariate": self.name, "levels": list(levels)},
            )
        if len(set(levels)) != len(levels):
            raise DataValidationError(
                f"covariate '{self.name}' has duplicate level labels",
                details={"covariate": self.name},
            )
        if not 0 <= self.baseline_index < len(levels):
            raise DataValidationError(
                f"baseline index {self.baseline_index} out of range for '{self.name}'",
                details={"covariate": self.name, "baseline_index": self.baseline_index},
            )

        obs = np.asarray(self.observations)
        if obs.ndim != 1:
            raise DataValidationError(f"observations of '{self.name}' must be one-dimensional")
        if obs.size and not np.issubdtype(obs.dtype, np.integer):
            if not np.all(np.equal(np.mod(obs, 1), 0)):
                raise DataValidationError(f"observations of '{self.name}' must be level indices")
        obs = obs.astype(np.int64)
        bad = (obs < 0) | (obs >= len(levels))
        if bad.any():
            first = int(np.flatnonzero(bad)[0])
            raise DataValidationError(
                f"record {first} of '{self.name}' has level index {int(obs[first])} "
                f"outside 0..{len(levels) - 1}",
                details={"covariate": self.name, "record": first},
            )

        counts = np.bincount(obs, minlength=len(levels))
        unobserved = [
            levels[k] for k in range(len(levels)) if k != self.baseline_index and counts[k] == 0
        ]
        if obs.size and unobserved:
            raise DataValidationError(
                f"covariate '{self.name}' has unobserved non-baseline levels: {unobserved}",
                details={"covariate": self.name, "unobserved": unobserved},
            )
        object.__setattr__(self, "observations", readonly_array(obs))

    @property
    def n_effects(self) -> int:
        """c_j: number of level effects (non-baseline levels)."""
        return len(self.levels) - 1

    @property
    def baseline(self) -> str:
        return self.levels[self.baseline_index]

    @property
    def effect_level_indices(self) -> tuple[int, ...]:
        """Level indices in column order (declaration order, baseline skipped)."""
        return tuple(k for k in range(len(self.levels)) if k != self.baseline_index)

    def partition_labels(self) -> tuple[str, ...]:
        """Labels of partition elements: element 0 is the baseline, k >= 1 the k-th effect."""
        return (self.baseline, *(self.levels[k] for k in self.effect_level_indices))

    def element_index(self) -> np.ndarray:
        """Per record: partition element (0 = baseline, k = k-th effect level)."""
        mapping = np.zeros(len(self.levels), dtype=np.int64)
        for pos, k in enumerate(self.effect_level_indices, start=1):
            mapping[k] = pos
        return mapping[self.observations]

    def __len__(self) -> int:
        return int(self.observations.size)


@dataclass(frozen=True, eq=False)
class ContinuousCovariate:
    """A covariate entering with a flat prior (never the mixture prior)."""

    name: str
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1:
            raise DataValidationError(f"values of '{self.name}' must be one-dimensional")
        if not np.all(np.isfinite(vals)):
            raise DataValidationError(
                f"continuous covariate '{self.name}' has non-finite values",
                details={"covariate": self.name},
            )
        object.__setattr__(self, "values", readonly_array(vals))

    def __len__(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True, eq=False)
class Dataset:
    response: np.ndarray
    categorical: tuple[CategoricalCovariate, ...] = ()
    continuous: tuple[ContinuousCovariate, ...] = ()

    def __post_init__(self) -> None:
        y = np.asarray(self.response, dtype=float)
        if y.ndim != 1 or y.size == 0:
            raise DataValidationError("response must be a non-empty vector")
        if not np.all(np.isfinite(y)):
            raise DataValidationError("response has non-finite values")
        object.__setattr__(self, "response", readonly_array(y))
        object.__setattr__(self, "categorical", tuple(self.categorical))
        object.__setattr__(self, "continuous", tuple(self.continuous))

        names = [c.name for c in self.categorical] + [c.name for c in self.continuous]
        if len(set(names)) != len(names):
            raise DataValidationError("covariate names must be unique", details={"names": names})

        for cov in (*self.categorical, *self.continuous):
            if len(cov) != y.size:
                raise DataValidationError(
                    f"covariate '{cov.name}' has {len(cov)} records, response has {y.size}",
                    details={"covariate": cov.name},
                )

        if y.size <= self.n_columns:
            logger.warning(
                "N=%d does not exceed the %d design columns; the flat-prior fit is ill-posed",
                y.size,
                self.n_columns,
            )

    @property
    def n(self) -> int:
        return int(self.response.size)

    @property
    def n_columns(self) -> int:
        return 1 + sum(c.n_effects for c in self.categorical) + len(self.continuous)

    def covariate(self, name: str) -> CategoricalCovariate:
        for c in self.categorical:
            if c.name == name:
                return c
        raise KeyError(name)


# -----------------------------------------------------------------------------
# Design matrix and coefficient layout
# -----------------------------------------------------------------------------


@dataclass(frozen=True)
class ColumnInfo:
    kind: ColumnKind
    covariate: str | None = None
    level: str | None = None

    @property
    def label(self) -> str:
        if self.kind == "intercept":
            return "(Intercept)"
        if self.kind == "dummy":
            return f"{self.covariate}[{self.level}]"
        return str(self.covariate)


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Intercept, then dummy blocks (covariate order), then continuous columns."""

    matrix: np.ndarray
    column_map: tuple[ColumnInfo, ...]

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[1] != len(self.column_map):
            raise DataValidationError("design matrix does not match its column map")
        object.__setattr__(self, "matrix", readonly_array(m))
        object.__setattr__(self, "column_map", tuple(self.column_map))

    @property
    def n_rows(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def n_columns(self) -> int:
        return int(self.matrix.shape[1])

    @property
    def labels(self) -> list[str]:
        return [c.label for c in self.column_map]

    def covariate_names(self) -> list[str]:
        seen: list[str] = []
        for c in self.column_map:
            if c.kind == "dummy" and c.covariate not in seen:
                seen.append(str(c.covariate))
        return seen

    def covariate_slice(self, name: str) -> slice:
        idx = [
            i for i, c in enumerate(self.column_map) if c.kind == "dummy" and c.covariate == name
        ]
        if not idx:
            raise KeyError(name)
        return slice(idx[0], idx[-1] + 1)


@dataclass(frozen=True, eq=False)
class CoefficientVector:
    beta0: float
    beta: tuple[np.ndarray, ...] = ()
    gamma: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self) -> None:
        object.__setattr__(self, "beta0", float(self.beta0))
        beta = tuple(readonly_array(np.asarray(b, float)) for b in self.beta)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "gamma", readonly_array(np.asarray(self.gamma, float).reshape(-1)))

    @property
    def n_effects(self) -> int:
        return sum(b.size for b in self.beta)


# -----------------------------------------------------------------------------
# Partitions of a covariate's levels
# -----------------------------------------------------------------------------


def canonical_labels(labels: Iterable[int]) -> tuple[int, ...]:
    """Relabel by first occurrence (restricted growth string)."""
    seen: dict[int, int] = {}
    out = []
    for v in labels:
        v = int(v)
        if v not in seen:
            seen[v] = len(seen)
        out.append(seen[v])
    return tuple(out)


@dataclass(frozen=True, order=False)
class LevelPartition:
    """
    A grouping of the elements 0..c_j of one covariate.

    Element 0 is the baseline pseudo-level; the block holding it is the zero block
    (levels fused to the baseline). Blocks are kept in canonical form: members
    ascending, blocks ordered by smallest member.
    """

    covariate: str
    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        blocks = tuple(sorted((tuple(sorted(int(x) for x in b)) for b in self.blocks if b)))
        members = [x for b in blocks for x in b]
        if sorted(members) != list(range(len(members))) or not members:
            raise DataValidationError(
                f"blocks do not partition 0..n-1 for '{self.covariate}'",
                details={"covariate": self.covariate, "blocks": [list(b) for b in blocks]},
            )
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def from_labels(cls, covariate: str, labels: Sequence[int]) -> LevelPartition:
        groups: dict[int, list[int]] = {}
        for i, v in enumerate(labels):
            groups.setdefault(int(v), []).append(i)
        return cls(covariate=covariate, blocks=tuple(tuple(g) for g in groups.values()))

    @property
    def n_elements(self) -> int:
        return sum(len(b) for b in self.blocks)

    @property
    def n_groups(self) -> int:
        return len(self.blocks)

    @property
    def zero_block(self) -> tuple[int, ...]:
        return self.blocks[0]

    @property
    def nonzero_blocks(self) -> tuple[tuple[int, ...], ...]:
        return self.blocks[1:]

    def labels(self) -> np.ndarray:
        """Block index per element (canonical labels: the zero block is 0)."""
        out = np.empty(self.n_elements, dtype=np.int64)
        for b, members in enumerate(self.blocks):
            out[list(members)] = b
        return out

    def sort_key(self) -> tuple[tuple[int, ...], ...]:
        return self.blocks

    def to_dict(self, element_labels: Sequence[str] | None = None) -> dict[str, object]:
        def name(i: int) -> object:
            return element_labels[i] if element_labels is not None else i

        return {
            "covariate": self.covariate,
            "groups": self.n_groups,
            "blocks": [
                {"zero_block": b == 0, "members": [name(i) for i in members]}
                for b, members in enumerate(self.blocks)
            ],
        }

    @classmethod
    def identity(cls, covariate: str, n_elements: int) -> LevelPartition:
        return cls(covariate=covariate, blocks=tuple((i,) for i in range(n_elements)))
