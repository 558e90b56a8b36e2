from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from sklearn.metrics import silhouette_samples as sklearn_silhouette_samples

from effectfuse.domain.errors import SelectionError

logger = logging.getLogger(__name__)

_IMPROVEMENT_TOL = 1e-12


@dataclass(frozen=True)
class PamResult:
    medoids: tuple[int, ...]
    assignment: np.ndarray
    cost: float
    build_cost: float
    swaps: int


def _check_dissimilarity(D: np.ndarray) -> np.ndarray:
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise SelectionError(
            "dissimilarity matrix must be square", details={"shape": list(D.shape)}
        )
    return D


def total_cost(D: np.ndarray, medoids: tuple[int, ...] | list[int]) -> float:
    return float(np.asarray(D)[:, list(medoids)].min(axis=1).sum())


def _build(D: np.ndarray, k: int) -> list[int]:
    medoids = [int(np.argmin(D.sum(axis=1)))]
    nearest = D[:, medoids[0]].copy()
    while len(medoids) < k:
        gains = np.maximum(nearest[:, None] - D, 0.0).sum(axis=0)
        gains[medoids] = -np.inf
        pick = int(np.argmax(gains))
        medoids.append(pick)
        nearest = np.minimum(nearest, D[:, pick])
    return medoids


def _swap(D: np.ndarray, medoids: list[int]) -> tuple[list[int], int]:
    """Best-improvement swaps until no swap strictly lowers the cost."""
    current = total_cost(D, medoids)
    swaps = 0
    while True:
        best = (current, -1, -1)
        non_medoid = np.ones(D.shape[0], dtype=bool)
        non_medoid[medoids] = False
        for pos in range(len(medoids)):
            others = medoids[:pos] + medoids[pos + 1 :]
            d_other = D[:, others].min(axis=1)
            costs = np.minimum(d_other[:, None], D).sum(axis=0)
            costs[~non_medoid] = np.inf
            h = int(np.argmin(costs))
            if costs[h] < best[0]:
                best = (float(costs[h]), pos, h)
        if best[1] < 0 or current - best[0] <= _IMPROVEMENT_TOL * max(1.0, current):
            return medoids, swaps
        medoids = list(medoids)
        medoids[best[1]] = best[2]
        current = best[0]
        swaps += 1


def pam(D: np.ndarray, k: int) -> PamResult:
    """
    Partitioning around medoids: greedy BUILD (lowest index wins ties) followed by
    SWAP until no exchange strictly decreases the total dissimilarity.
    """
    D = _check_dissimilarity(D)
    n = D.shape[0]
    if not 2 <= k <= n:
        raise SelectionError(f"k={k} outside 2..{n}", details={"k": k, "n": n})

    medoids = _build(D, k)
    build_cost = total_cost(D, medoids)
    medoids, swaps = _swap(D, medoids)
    medoids = sorted(medoids)

    assignment = np.argmin(D[:, medoids], axis=1)
    assignment[medoids] = np.arange(k)
    cost = float(D[np.arange(n), np.asarray(medoids)[assignment]].sum())
    logger.debug("pam k=%d: build cost %.6g, final cost %.6g, %d swaps", k, build_cost, cost, swaps)
    return PamResult(
        medoids=tuple(medoids),
        assignment=assignment,
        cost=cost,
        build_cost=build_cost,
        swaps=swaps,
    )


def silhouette_samples(D: np.ndarray, assignment: np.ndarray) -> np.ndarray:
    """Per-object silhouette; objects in singleton clusters score 0."""
    D = _check_dissimilarity(D)
    labels = np.asarray(assignment)
    n_clusters = np.unique(labels).size
    if n_clusters < 2:
        raise SelectionError("silhouette needs at least two clusters")
    if n_clusters == labels.size:
        return np.zeros(labels.size)
    D = D.copy()
    np.fill_diagonal(D, 0.0)
    return sklearn_silhouette_samples(D, labels, metric="precomputed")


def silhouette(D: np.ndarray, assignment: np.ndarray) -> float:
    """Average silhouette width."""
    return float(silhouette_samples(D, assignment).mean())
