from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from sklearn.metrics import adjusted_rand_score

from effectfuse.domain.errors import DataValidationError
from effectfuse.domain.models import CoefficientVector, DesignMatrix, LevelPartition
from effectfuse.services.design import flatten


def _same_elements(p1: LevelPartition, p2: LevelPartition) -> None:
    if p1.n_elements != p2.n_elements:
        raise DataValidationError(
            f"partitions cover {p1.n_elements} and {p2.n_elements} elements",
            details={"left": p1.n_elements, "right": p2.n_elements},
        )


def contingency(p1: LevelPartition, p2: LevelPartition) -> np.ndarray:
    _same_elements(p1, p2)
    table = np.zeros((p1.n_groups, p2.n_groups), dtype=np.int64)
    np.add.at(table, (p1.labels(), p2.labels()), 1)
    return table


def adjusted_rand(p1: LevelPartition, p2: LevelPartition) -> float:
    """Rand index corrected for chance."""
    _same_elements(p1, p2)
    return float(adjusted_rand_score(p1.labels(), p2.labels()))


def error_rate(truth: LevelPartition, estimate: LevelPartition) -> float:
    """Share of elements outside the best one-to-one matching of blocks."""
    table = contingency(truth, estimate)
    rows, cols = linear_sum_assignment(table, maximize=True)
    matched = int(table[rows, cols].sum())
    return (truth.n_elements - matched) / truth.n_elements


@dataclass(frozen=True)
class PairCounts:
    """Over unordered element pairs. Positive means the pair is truly split."""

    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def pair_counts(truth: LevelPartition, estimate: LevelPartition) -> PairCounts:
    _same_elements(truth, estimate)
    lt, le = truth.labels(), estimate.labels()
    iu = np.triu_indices(truth.n_elements, k=1)
    t_same = (lt[:, None] == lt[None, :])[iu]
    e_same = (le[:, None] == le[None, :])[iu]
    return PairCounts(
        tp=int(np.sum(~t_same & ~e_same)),
        fp=int(np.sum(t_same & ~e_same)),
        tn=int(np.sum(t_same & e_same)),
        fn=int(np.sum(~t_same & e_same)),
    )


def fpr_fnr(truth: LevelPartition, estimate: LevelPartition) -> tuple[float | None, float | None]:
    """FPR = FP/(FP+TN), FNR = FN/(TP+FN); None where the denominator is zero."""
    c = pair_counts(truth, estimate)
    fpr = c.fp / (c.fp + c.tn) if c.fp + c.tn else None
    fnr = c.fn / (c.tp + c.fn) if c.tp + c.fn else None
    return fpr, fnr


@dataclass(frozen=True)
class ClusterMetrics:
    ar: float
    err: float
    fpr: float | None
    fnr: float | None
    group_count: int

    def to_dict(self) -> dict[str, float | int | None]:
        return asdict(self)


def cluster_metrics(truth: LevelPartition, estimate: LevelPartition) -> ClusterMetrics:
    fpr, fnr = fpr_fnr(truth, estimate)
    return ClusterMetrics(
        ar=adjusted_rand(truth, estimate),
        err=error_rate(truth, estimate),
        fpr=fpr,
        fnr=fnr,
        group_count=estimate.n_groups,
    )


# -----------------------------------------------------------------------------
# Estimation accuracy
# -----------------------------------------------------------------------------


def mse(beta_true: CoefficientVector, beta_hat: CoefficientVector) -> float:
    """Squared error over the intercept and all level effects, divided by C + 1."""
    if [b.size for b in beta_true.beta] != [b.size for b in beta_hat.beta]:
        raise DataValidationError(
            "coefficient layouts differ",
            details={
                "truth": [b.size for b in beta_true.beta],
                "estimate": [b.size for b in beta_hat.beta],
            },
        )
    t = np.concatenate([[beta_true.beta0], *beta_true.beta])
    e = np.concatenate([[beta_hat.beta0], *beta_hat.beta])
    return float(np.sum((t - e) ** 2) / t.size)


def mspe(
    beta_hat: CoefficientVector | np.ndarray,
    new_design: DesignMatrix | np.ndarray,
    y_new: np.ndarray,
) -> float:
    """Mean squared prediction error on fresh data."""
    b = flatten(beta_hat) if isinstance(beta_hat, CoefficientVector) else np.asarray(beta_hat)
    X = new_design.matrix if isinstance(new_design, DesignMatrix) else np.asarray(new_design)
    y_new = np.asarray(y_new, dtype=float).reshape(-1)
    if X.ndim != 2 or X.shape[1] != b.size or X.shape[0] != y_new.size:
        raise DataValidationError(
            "prediction inputs do not conform",
            details={"design": list(X.shape), "coefficients": int(b.size), "y": int(y_new.size)},
        )
    resid = y_new - X @ b
    return float(resid @ resid / y_new.size)
