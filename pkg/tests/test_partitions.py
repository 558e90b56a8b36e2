from __future__ import annotations

import numpy as np
import pytest

from effectfuse.domain.errors import SelectionError
from effectfuse.domain.models import LevelPartition
from effectfuse.services.partitions import (
    CoclusterAccumulator,
    default_k_max,
    draw_partition,
    group_count_distribution,
    most_frequent_partition,
    select_by_pam,
)


# ------------------------------
# Partition of a single draw
# ------------------------------
@pytest.mark.parametrize(
    "S,blocks",
    [
        ([0, 0, 1], ((0, 1, 2), (3,))),
        ([1, 2, 3], ((0,), (1,), (2,), (3,))),
        ([0, 0, 0], ((0, 1, 2, 3),)),
        ([2, 2, 0], ((0, 3), (1, 2))),
    ],
)
def test_draw_partition(S, blocks):
    assert draw_partition("x", np.array(S)).blocks == blocks


def test_draw_partition_ignores_component_labels():
    a = draw_partition("x", np.array([3, 3, 1, 2]))
    b = draw_partition("x", np.array([1, 1, 2, 3]))
    assert a == b


# ------------------------------
# Co-clustering
# ------------------------------
def test_cocluster_matrix_symmetric_with_unit_diagonal(rng):
    acc = CoclusterAccumulator(covariate="x", n_elements=5)
    acc.add(rng.integers(0, 4, size=(300, 4)))
    C = acc.similarity()
    np.testing.assert_allclose(C, C.T)
    np.testing.assert_allclose(np.diag(C), 1.0)
    assert ((C >= 0) & (C <= 1)).all()
    np.testing.assert_allclose(acc.dissimilarity(), 1.0 - C)


def test_cocluster_two_draws_give_half():
    acc = CoclusterAccumulator(covariate="x", n_elements=3)
    acc.add(np.array([[1, 1], [1, 2]]))
    C = acc.similarity()
    assert C[1, 2] == pytest.approx(0.5)
    assert C[0, 1] == 0.0


def test_cocluster_baseline_pairs_count_zero_component():
    acc = CoclusterAccumulator(covariate="x", n_elements=3)
    acc.add(np.array([[0, 1], [0, 0], [2, 0]]))
    C = acc.similarity()
    assert C[0, 1] == pytest.approx(2 / 3)
    assert C[0, 2] == pytest.approx(2 / 3)


def test_cocluster_accumulates_in_chunks_like_one_pass(rng):
    S = rng.integers(0, 3, size=(1500, 3))
    once = CoclusterAccumulator(covariate="x", n_elements=4)
    once.add(S)
    split = CoclusterAccumulator(covariate="x", n_elements=4)
    split.add(S[:700])
    split.add(S[700:])
    np.testing.assert_allclose(once.similarity(), split.similarity())


def test_cocluster_shape_and_empty_checks():
    acc = CoclusterAccumulator(covariate="x", n_elements=3)
    with pytest.raises(SelectionError):
        acc.similarity()
    with pytest.raises(SelectionError):
        acc.add(np.zeros((2, 3), dtype=int))


# ------------------------------
# Most frequent partition
# ------------------------------
def test_most_frequent_partition_counts_visits():
    S = np.array([[1, 1, 2], [2, 2, 1], [1, 2, 3]])
    result = most_frequent_partition("x", S)
    assert result.partition.blocks == ((0,), (1, 2), (3,))
    assert result.frequency == 2
    assert result.draws == 3
    assert result.share == pytest.approx(2 / 3)
    assert not result.is_tie


def test_most_frequent_partition_tie_resolves_canonically():
    S = np.array([[1, 1], [1, 2]])
    result = most_frequent_partition("x", S)
    assert result.is_tie
    assert result.partition.blocks == ((0,), (1,), (2,))
    assert [p.blocks for p in result.tied] == [((0,), (1, 2))]


def test_most_frequent_partition_needs_draws():
    with pytest.raises(SelectionError):
        most_frequent_partition("x", np.empty((0, 3), dtype=int))


def test_group_count_distribution():
    S = np.array([[0, 0, 0], [1, 1, 0], [1, 2, 3], [2, 2, 2]])
    assert group_count_distribution(S) == {1: 1, 2: 2, 4: 1}


# ------------------------------
# PAM selection
# ------------------------------
def _block_similarity(labels: list[int]) -> np.ndarray:
    lab = np.asarray(labels)
    return (lab[:, None] == lab[None, :]).astype(float)


def test_select_by_pam_recovers_two_blocks():
    C = _block_similarity([0, 0, 0, 1, 1])
    sel = select_by_pam("x", C)
    assert sel.k == 2
    assert sel.partition.blocks == ((0, 1, 2), (3, 4))
    assert sel.silhouette == pytest.approx(1.0)
    assert not sel.one_cluster_suspected
    assert set(sel.silhouettes) == {2, 3, 4, 5}


def test_select_by_pam_recovers_blocks_under_noise():
    C = 0.9 * _block_similarity([0, 1, 0, 2, 1, 2, 2]) + 0.05
    np.fill_diagonal(C, 1.0)
    sel = select_by_pam("x", C)
    assert sel.partition == LevelPartition("x", ((0, 2), (1, 4), (3, 5, 6)))


def test_select_by_pam_flags_all_ones_matrix():
    sel = select_by_pam("x", np.ones((4, 4)))
    assert sel.one_cluster_suspected
    assert sel.silhouette <= 0.0


def test_select_by_pam_k_max_bounds():
    C = _block_similarity([0, 0, 1])
    with pytest.raises(SelectionError):
        select_by_pam("x", C, k_max=4)
    with pytest.raises(SelectionError):
        select_by_pam("x", np.ones((1, 1)))
    assert select_by_pam("x", C, k_max=2).k == 2


def test_default_k_max_is_capped():
    assert default_k_max(5) == 5
    assert default_k_max(100) == 30
