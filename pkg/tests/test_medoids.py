from __future__ import annotations

from itertools import combinations

import numpy as np
import pytest

from effectfuse.domain.errors import SelectionError
from effectfuse.services.medoids import pam, silhouette, silhouette_samples, total_cost


def _random_dissimilarity(rng: np.random.Generator, n: int) -> np.ndarray:
    pts = rng.standard_normal((n, 2))
    return np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)


def test_pam_block_example_has_zero_cost():
    lab = np.array([0, 0, 1, 1, 1, 2])
    D = (lab[:, None] != lab[None, :]).astype(float)
    result = pam(D, 3)
    assert result.cost == 0.0
    assert len(set(result.assignment.tolist())) == 3
    assert (result.assignment[:2] == result.assignment[0]).all()
    assert (result.assignment[2:5] == result.assignment[2]).all()


def test_pam_k_equal_to_n_puts_every_object_alone(rng):
    D = _random_dissimilarity(rng, 5)
    result = pam(D, 5)
    assert result.medoids == (0, 1, 2, 3, 4)
    assert result.cost == 0.0


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("k", [2, 3])
def test_pam_ends_at_a_swap_local_optimum(seed, k):
    D = _random_dissimilarity(np.random.default_rng(seed), 8)
    result = pam(D, k)
    assert result.cost <= result.build_cost + 1e-12
    assert result.cost == pytest.approx(total_cost(D, result.medoids))
    best = min(total_cost(D, m) for m in combinations(range(8), k))
    assert result.cost >= best - 1e-12
    for pos in range(k):
        for h in set(range(8)) - set(result.medoids):
            swapped = list(result.medoids)
            swapped[pos] = h
            assert total_cost(D, swapped) >= result.cost - 1e-9


def test_pam_matches_brute_force_on_separated_groups(rng):
    centres = np.repeat([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]], [3, 3, 2], axis=0)
    pts = centres + 0.1 * rng.standard_normal(centres.shape)
    D = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    best = min(total_cost(D, m) for m in combinations(range(8), 3))
    assert pam(D, 3).cost == pytest.approx(best, rel=1e-9)


def test_pam_medoids_are_assigned_to_themselves(rng):
    D = _random_dissimilarity(rng, 7)
    result = pam(D, 3)
    for cluster, m in enumerate(result.medoids):
        assert result.assignment[m] == cluster


def test_pam_rejects_bad_k_and_shape():
    D = np.zeros((3, 3))
    with pytest.raises(SelectionError):
        pam(D, 1)
    with pytest.raises(SelectionError):
        pam(D, 4)
    with pytest.raises(SelectionError):
        pam(np.zeros((2, 3)), 2)


def test_silhouette_perfect_separation_is_one():
    lab = np.array([0, 0, 1, 1])
    D = (lab[:, None] != lab[None, :]).astype(float)
    assert silhouette(D, lab) == pytest.approx(1.0)


def test_silhouette_hand_computed_four_points():
    # points on a line at 0, 1, 4, 6
    x = np.array([0.0, 1.0, 4.0, 6.0])
    D = np.abs(x[:, None] - x[None, :])
    s = silhouette_samples(D, np.array([0, 0, 1, 1]))
    expected = [
        (5.0 - 1.0) / 5.0,
        (4.0 - 1.0) / 4.0,
        (3.5 - 2.0) / 3.5,
        (5.5 - 2.0) / 5.5,
    ]
    np.testing.assert_allclose(s, expected)


def test_silhouette_singleton_scores_zero():
    x = np.array([0.0, 1.0, 10.0])
    D = np.abs(x[:, None] - x[None, :])
    s = silhouette_samples(D, np.array([0, 0, 1]))
    assert s[2] == 0.0


def test_silhouette_needs_two_clusters():
    with pytest.raises(SelectionError):
        silhouette(np.zeros((3, 3)), np.zeros(3, dtype=int))


def test_silhouette_all_singletons_scores_zero():
    D = _random_dissimilarity(np.random.default_rng(0), 4)
    np.testing.assert_array_equal(silhouette_samples(D, np.arange(4)), np.zeros(4))


def test_silhouette_ignores_the_diagonal():
    x = np.array([0.0, 1.0, 4.0, 6.0])
    D = np.abs(x[:, None] - x[None, :])
    noisy = D + np.eye(4) * 1e-3
    lab = np.array([0, 0, 1, 1])
    np.testing.assert_allclose(silhouette_samples(noisy, lab), silhouette_samples(D, lab))


@pytest.mark.parametrize("seed", range(4))
def test_silhouette_matches_the_definition(seed):
    rng = np.random.default_rng(seed)
    D = _random_dissimilarity(rng, 12)
    labels = np.repeat([0, 1, 2], 4)
    rng.shuffle(labels)
    expected = []
    for i in range(12):
        own = (labels == labels[i]) & (np.arange(12) != i)
        a = D[i, own].mean()
        b = min(D[i, labels == k].mean() for k in set(labels) - {labels[i]})
        expected.append((b - a) / max(a, b))
    np.testing.assert_allclose(silhouette_samples(D, labels), expected)
    assert silhouette(D, labels) == pytest.approx(np.mean(expected))


@pytest.mark.parametrize("seed", range(4))
def test_silhouette_values_lie_in_unit_interval(seed):
    rng = np.random.default_rng(seed)
    D = _random_dissimilarity(rng, 10)
    s = silhouette_samples(D, rng.integers(0, 3, 10))
    assert ((s >= -1.0) & (s <= 1.0)).all()
