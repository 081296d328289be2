"""k-means with k-means++ seeding and Lloyd iterations.

Shared by the visual-vocabulary codebook, pseudo-class minting over photo
latent factors, and GMM mean initialization. Deterministic for a fixed seed;
nearest-centroid ties break toward the lowest index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .rng import generator

MAX_ITERS = 300
SHIFT_TOL = 1e-6


@dataclass
class KMeansResult:
    centroids: np.ndarray       # (k, d)
    labels: np.ndarray          # (n,) int32
    inertia_trace: list[float]  # total within-cluster squared distance per iteration


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """All-pairs squared Euclidean distances, clipped at zero."""
    d2 = (
        (points * points).sum(axis=1)[:, None]
        - 2.0 * points @ centroids.T
        + (centroids * centroids).sum(axis=1)[None, :]
    )
    return np.maximum(d2, 0.0)


def kmeanspp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Classic D^2-weighted seeding."""
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = points[first]
    closest = _sq_dists(points, centroids[:1])[:, 0]
    for c in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            # all points coincide with chosen centroids; reuse uniformly
            pick = int(rng.integers(n))
        else:
            pick = int(rng.choice(n, p=closest / total))
        centroids[c] = points[pick]
        closest = np.minimum(closest, _sq_dists(points, centroids[c : c + 1])[:, 0])
    return centroids


def kmeans(
    points: np.ndarray,
    k: int,
    seed: int,
    max_iters: int = MAX_ITERS,
    tol: float = SHIFT_TOL,
) -> KMeansResult:
    """Lloyd iterations until centroid shift < tol or max_iters.

    Empty clusters are repaired by re-seeding the centroid at the point
    farthest from its currently assigned centroid.
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2:
        raise DataError("points must be a 2-D array")
    n = x.shape[0]
    if k < 1:
        raise DataError("k must be >= 1")
    if k > n:
        raise DataError(f"cannot form {k} clusters from {n} points")

    rng = generator(seed, "kmeans")
    centroids = kmeanspp_init(x, k, rng)
    labels = np.zeros(n, dtype=np.int32)
    trace: list[float] = []
    for _ in range(max_iters):
        d2 = _sq_dists(x, centroids)
        labels = d2.argmin(axis=1).astype(np.int32)
        point_d2 = d2[np.arange(n), labels]

        # repair: move each empty centroid onto the worst-fit point
        counts = np.bincount(labels, minlength=k)
        for empty in np.flatnonzero(counts == 0):
            far = int(point_d2.argmax())
            centroids[empty] = x[far]
            labels[far] = empty
            point_d2[far] = 0.0
            counts = np.bincount(labels, minlength=k)

        trace.append(float(point_d2.sum()))
        new_centroids = centroids.copy()
        for c in range(k):
            members = labels == c
            if members.any():
                new_centroids[c] = x[members].mean(axis=0)
        shift = float(np.abs(new_centroids - centroids).max())
        centroids = new_centroids
        if shift < tol:
            break

    d2 = _sq_dists(x, centroids)
    labels = d2.argmin(axis=1).astype(np.int32)
    counts = np.bincount(labels, minlength=k)
    point_d2 = d2[np.arange(n), labels]
    guard = 0
    while (counts == 0).any():
        empty = int(np.flatnonzero(counts == 0)[0])
        far = int(point_d2.argmax())
        centroids[empty] = x[far]
        labels[far] = empty
        point_d2[far] = 0.0
        counts = np.bincount(labels, minlength=k)
        guard += 1
        if guard > k:
            raise DataError(f"cannot populate {k} clusters; too few distinct points")
    trace.append(float(point_d2.sum()))
    return KMeansResult(centroids=centroids, labels=labels, inertia_trace=trace)


def assign(centroids: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Nearest-centroid labels for new points (ties to the lowest index)."""
    x = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if x.shape[1] != centroids.shape[1]:
        raise DataError(
            f"dimension {x.shape[1]} does not match centroids {centroids.shape[1]}"
        )
    return _sq_dists(x, centroids).argmin(axis=1).astype(np.int32)
