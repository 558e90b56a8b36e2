from __future__ import annotations

import numpy as np
import pytest
from scipy.special import comb

from effectfuse.domain.errors import DataValidationError
from effectfuse.domain.models import (
    CategoricalCovariate,
    CoefficientVector,
    Dataset,
    LevelPartition,
)
from effectfuse.services.design import build_design
from effectfuse.services.evaluation import (
    adjusted_rand,
    cluster_metrics,
    error_rate,
    fpr_fnr,
    mse,
    mspe,
    pair_counts,
)


def _p(*labels: int) -> LevelPartition:
    return LevelPartition.from_labels("x", labels)


# ------------------------------
# Adjusted Rand index
# ------------------------------
def test_adjusted_rand_of_a_partition_with_itself_is_one():
    p = _p(0, 0, 1, 2, 2)
    assert adjusted_rand(p, p) == pytest.approx(1.0)


def test_adjusted_rand_hand_example_is_zero():
    assert adjusted_rand(_p(0, 0, 1, 1), _p(0, 0, 0, 1)) == pytest.approx(0.0)


def test_adjusted_rand_single_block_on_both_sides():
    assert adjusted_rand(_p(0, 0, 0), _p(0, 0, 0)) == 1.0


@pytest.mark.parametrize("seed", range(5))
def test_adjusted_rand_symmetric_and_matches_pair_counts(seed):
    rng = np.random.default_rng(seed)
    pa, pb = _p(*rng.integers(0, 4, 15)), _p(*rng.integers(0, 3, 15))
    assert adjusted_rand(pa, pb) == pytest.approx(adjusted_rand(pb, pa))
    # pair-confusion form: split pairs count as positives
    c = pair_counts(pa, pb)
    num = 2.0 * (c.tp * c.tn - c.fn * c.fp)
    den = (c.tp + c.fn) * (c.fn + c.tn) + (c.tp + c.fp) * (c.fp + c.tn)
    assert adjusted_rand(pa, pb) == pytest.approx(num / den)


def test_partitions_must_cover_the_same_elements():
    with pytest.raises(DataValidationError):
        adjusted_rand(_p(0, 1), _p(0, 1, 1))


# ------------------------------
# Error rate
# ------------------------------
def test_error_rate_one_misplaced_element():
    truth = _p(0, 0, 0, 0, 0, 1, 1, 1, 1, 1)
    estimate = _p(0, 0, 0, 0, 1, 1, 1, 1, 1, 1)
    assert error_rate(truth, estimate) == pytest.approx(0.1)


def test_error_rate_counts_unmatched_blocks():
    truth = _p(0, 0, 0, 1, 1, 1, 2, 2, 2)
    estimate = _p(0, 0, 0, 0, 0, 0, 0, 0, 0)
    assert error_rate(truth, estimate) == pytest.approx(6 / 9)


def test_error_rate_ignores_block_labels():
    assert error_rate(_p(0, 0, 1, 1), _p(1, 1, 0, 0)) == 0.0


# ------------------------------
# Pairwise rates
# ------------------------------
def test_fpr_fnr_of_full_split_against_single_block():
    assert fpr_fnr(_p(0, 0, 0), _p(0, 1, 2)) == (1.0, None)


def test_fpr_fnr_of_single_block_against_full_split():
    assert fpr_fnr(_p(0, 1, 2), _p(0, 0, 0)) == (None, 1.0)


def test_fpr_fnr_perfect_estimate():
    assert fpr_fnr(_p(0, 0, 1, 1), _p(0, 0, 1, 1)) == (0.0, 0.0)


@pytest.mark.parametrize("seed", range(3))
def test_pair_counts_cover_every_pair(seed):
    rng = np.random.default_rng(seed)
    n = 9
    c = pair_counts(_p(*rng.integers(0, 3, n)), _p(*rng.integers(0, 4, n)))
    assert c.total == comb(n, 2, exact=True)


def test_cluster_metrics_dict():
    m = cluster_metrics(_p(0, 0, 1), _p(0, 0, 1)).to_dict()
    assert m == {"ar": 1.0, "err": 0.0, "fpr": 0.0, "fnr": 0.0, "group_count": 2}


# ------------------------------
# Estimation accuracy
# ------------------------------
def test_mse_over_intercept_and_effects():
    truth = CoefficientVector(beta0=0.0, beta=(np.array([0.0, 1.0]), np.array([2.0])))
    estimate = CoefficientVector(beta0=1.0, beta=(np.array([0.0, 1.0]), np.array([1.0])))
    assert mse(truth, estimate) == pytest.approx(0.5)


def test_mse_layout_mismatch():
    truth = CoefficientVector(beta0=0.0, beta=(np.array([0.0, 1.0]),))
    estimate = CoefficientVector(beta0=0.0, beta=(np.array([0.0]),))
    with pytest.raises(DataValidationError):
        mse(truth, estimate)


def test_mspe_hand_example():
    a = CategoricalCovariate("a", ("0", "1"), np.array([0, 1, 0, 1]))
    design = build_design(Dataset(response=np.zeros(4), categorical=(a,)))
    coefs = CoefficientVector(beta0=1.0, beta=(np.array([1.0]),))
    y_new = np.array([0.0, 3.0, 2.0, 1.0])
    assert mspe(coefs, design, y_new) == pytest.approx(1.0)


def test_mspe_rejects_non_conforming_inputs():
    with pytest.raises(DataValidationError):
        mspe(np.zeros(2), np.ones((3, 3)), np.zeros(3))


def test_adjusted_rand_of_independent_partitions_is_near_zero(rng):
    scores = [
        adjusted_rand(_p(*rng.integers(0, 5, 60)), _p(*rng.integers(0, 5, 60))) for _ in range(200)
    ]
    assert abs(np.mean(scores)) < 0.01
