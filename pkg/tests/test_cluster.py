"""k-means behavior: planted recovery, monotone objective, determinism."""

import itertools

import numpy as np
import pytest

from mqle.cluster import assign, kmeans
from mqle.errors import DataError


def planted_blobs(rng, centers, per_cluster, sigma):
    points, labels = [], []
    for i, c in enumerate(centers):
        points.append(c + sigma * rng.normal(size=(per_cluster, len(c))))
        labels.extend([i] * per_cluster)
    return np.vstack(points), np.array(labels)


def best_permutation_accuracy(pred, truth, k):
    best = 0.0
    for perm in itertools.permutations(range(k)):
        mapped = np.array([perm[p] for p in pred])
        best = max(best, float((mapped == truth).mean()))
    return best


class TestKMeans:
    def test_separable_clusters_recovered(self):
        rng = np.random.default_rng(0)
        centers = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
        points, truth = planted_blobs(rng, centers, 50, 0.5)
        result = kmeans(points, 3, seed=1)
        assert best_permutation_accuracy(result.labels, truth, 3) >= 0.99

    def test_objective_non_increasing(self):
        rng = np.random.default_rng(1)
        points = rng.normal(size=(200, 6))
        result = kmeans(points, 8, seed=2)
        trace = np.array(result.inertia_trace)
        assert np.all(np.diff(trace) <= 1e-9)

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        points = rng.normal(size=(120, 4))
        a = kmeans(points, 5, seed=7)
        b = kmeans(points.copy(), 5, seed=7)
        np.testing.assert_array_equal(a.labels, b.labels)
        np.testing.assert_array_equal(a.centroids, b.centroids)

    def test_two_distinct_points_two_singletons(self):
        points = np.array([[0.0, 0.0], [5.0, 5.0]])
        result = kmeans(points, 2, seed=0)
        assert sorted(result.labels.tolist()) == [0, 1]

    def test_k_exceeds_points_rejected(self):
        with pytest.raises(DataError, match="clusters"):
            kmeans(np.zeros((3, 2)), 5, seed=0)

    def test_no_empty_clusters(self):
        rng = np.random.default_rng(3)
        # heavily duplicated points force repair paths
        base = rng.normal(size=(10, 3))
        points = np.vstack([base, base, base, rng.normal(size=(10, 3)) * 8])
        result = kmeans(points, 12, seed=4)
        counts = np.bincount(result.labels, minlength=12)
        assert (counts > 0).all()

    def test_assign_ties_break_low_index(self):
        centroids = np.array([[1.0, 0.0], [1.0, 0.0], [3.0, 0.0]])
        labels = assign(centroids, np.array([[1.0, 0.0]]))
        assert labels[0] == 0

    def test_assign_exact_centroid_match(self):
        rng = np.random.default_rng(4)
        points = rng.normal(size=(50, 4))
        result = kmeans(points, 6, seed=5)
        labels = assign(result.centroids, result.centroids)
        np.testing.assert_array_equal(labels, np.arange(6))
