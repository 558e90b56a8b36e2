from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from effectfuse.domain.errors import SelectionError
from effectfuse.domain.models import LevelPartition, canonical_labels, readonly_array
from effectfuse.services.medoids import pam, silhouette
from effectfuse.services.sampler import McmcTrace
from effectfuse.utils.constants import DEFAULT_K_MAX_CAP

logger = logging.getLogger(__name__)

# Draws per chunk when tallying co-clustering counts.
_CHUNK = 512


def _with_baseline(S: np.ndarray) -> np.ndarray:
    """Prepend the baseline pseudo-level, fixed to component 0."""
    S = np.asarray(S, dtype=np.int64)
    if S.ndim == 1:
        return np.concatenate([[0], S])
    return np.hstack([np.zeros((S.shape[0], 1), dtype=np.int64), S])


def draw_partition(covariate: str, S_j: np.ndarray) -> LevelPartition:
    """Group elements 0..c_j by allocation; element 0 (baseline) sits in component 0."""
    return LevelPartition.from_labels(covariate, canonical_labels(_with_baseline(S_j)))


# -----------------------------------------------------------------------------
# Co-clustering
# -----------------------------------------------------------------------------


@dataclass
class CoclusterAccumulator:
    """Running pairwise same-component tallies over draws (baseline included)."""

    covariate: str
    n_elements: int
    counts: np.ndarray = field(init=False)
    draws: int = 0

    def __post_init__(self) -> None:
        self.counts = np.zeros((self.n_elements, self.n_elements), dtype=np.int64)

    def add(self, S_draws: np.ndarray) -> None:
        """Add a (draws x c_j) block of allocations."""
        S_draws = np.atleast_2d(np.asarray(S_draws, dtype=np.int64))
        if S_draws.shape[1] + 1 != self.n_elements:
            raise SelectionError(
                f"allocations for '{self.covariate}' have {S_draws.shape[1]} levels, "
                f"expected {self.n_elements - 1}"
            )
        full = _with_baseline(S_draws)
        for start in range(0, full.shape[0], _CHUNK):
            chunk = full[start : start + _CHUNK]
            self.counts += (chunk[:, :, None] == chunk[:, None, :]).sum(axis=0)
        self.draws += full.shape[0]

    def similarity(self) -> np.ndarray:
        """C_j = counts / draws."""
        if self.draws == 0:
            raise SelectionError(f"no draws accumulated for '{self.covariate}'")
        return readonly_array(self.counts / float(self.draws))

    def dissimilarity(self) -> np.ndarray:
        return readonly_array(1.0 - self.similarity())


def accumulate_cocluster(trace: McmcTrace) -> dict[str, CoclusterAccumulator]:
    if trace.n_draws == 0:
        raise SelectionError("trace has no draws")
    out = {}
    for name, S in trace.allocations.items():
        acc = CoclusterAccumulator(covariate=name, n_elements=S.shape[1] + 1)
        acc.add(S)
        out[name] = acc
    return out


# -----------------------------------------------------------------------------
# Most frequent partition
# -----------------------------------------------------------------------------


@dataclass(frozen=True)
class MostFrequentResult:
    partition: LevelPartition
    frequency: int
    draws: int
    tied: tuple[LevelPartition, ...] = ()

    @property
    def share(self) -> float:
        return self.frequency / self.draws

    @property
    def is_tie(self) -> bool:
        return bool(self.tied)


def _partition_counts(S_draws: np.ndarray) -> Counter[tuple[int, ...]]:
    full = _with_baseline(S_draws)
    # Relabelling by first occurrence makes rows comparable across label switches.
    return Counter(canonical_labels(row) for row in full.tolist())


def most_frequent_partition(covariate: str, S_draws: np.ndarray) -> MostFrequentResult:
    """
    Mode of the visited partitions. Ties resolve to the smallest partition in
    canonical block order; the other tied partitions are reported.
    """
    S_draws = np.atleast_2d(np.asarray(S_draws))
    if S_draws.shape[0] == 0:
        raise SelectionError(f"no draws for '{covariate}'")
    counts = _partition_counts(S_draws)
    top = max(counts.values())
    winners = sorted(
        (LevelPartition.from_labels(covariate, lab) for lab, c in counts.items() if c == top),
        key=LevelPartition.sort_key,
    )
    if len(winners) > 1:
        logger.warning(
            "'%s': %d partitions tie for most frequent (%d draws each)",
            covariate,
            len(winners),
            top,
        )
    return MostFrequentResult(
        partition=winners[0], frequency=top, draws=int(S_draws.shape[0]), tied=tuple(winners[1:])
    )


def group_count_distribution(S_draws: np.ndarray) -> dict[int, int]:
    """Number of blocks (baseline included) per draw, tallied."""
    full = _with_baseline(np.atleast_2d(S_draws))
    sorted_rows = np.sort(full, axis=1)
    groups = 1 + (np.diff(sorted_rows, axis=1) != 0).sum(axis=1)
    values, counts = np.unique(groups, return_counts=True)
    return {int(v): int(c) for v, c in zip(values, counts, strict=True)}


# -----------------------------------------------------------------------------
# PAM + silhouette
# -----------------------------------------------------------------------------


@dataclass(frozen=True)
class PamSelection:
    partition: LevelPartition
    k: int
    silhouette: float
    silhouettes: dict[int, float]
    one_cluster_suspected: bool = False


def default_k_max(n_elements: int, cap: int = DEFAULT_K_MAX_CAP) -> int:
    return min(n_elements, cap)


def select_by_pam(covariate: str, C: np.ndarray, k_max: int | None = None) -> PamSelection:
    """
    PAM on D = 1 - C for k = 2..k_max, keeping the highest average silhouette
    (first k wins ties). A best silhouette <= 0 flags a suspected one-cluster solution.
    """
    C = np.asarray(C, dtype=float)
    n = C.shape[0]
    if n < 2:
        raise SelectionError(
            f"'{covariate}' has fewer than two elements; PAM needs k >= 2",
            details={"covariate": covariate},
        )
    k_max = default_k_max(n) if k_max is None else int(k_max)
    if not 2 <= k_max <= n:
        raise SelectionError(
            f"k_max={k_max} outside 2..{n} for '{covariate}'",
            details={"covariate": covariate, "k_max": k_max},
        )

    D = np.clip(1.0 - C, 0.0, 1.0)
    np.fill_diagonal(D, 0.0)
    best_k, best_s, best_assign = 0, -np.inf, None
    scores: dict[int, float] = {}
    for k in range(2, k_max + 1):
        result = pam(D, k)
        s = silhouette(D, result.assignment)
        scores[k] = s
        if s > best_s:
            best_k, best_s, best_assign = k, s, result.assignment

    suspected = best_s <= 0.0
    if suspected:
        logger.warning("'%s': best silhouette %.3f <= 0; one cluster suspected", covariate, best_s)
    partition = LevelPartition.from_labels(covariate, canonical_labels(best_assign))
    return PamSelection(
        partition=partition,
        k=best_k,
        silhouette=float(best_s),
        silhouettes=scores,
        one_cluster_suspected=suspected,
    )
