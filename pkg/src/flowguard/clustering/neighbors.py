"""Euclidean distance helpers and the k-d tree index shared by clustering and
the detector."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from ..errors import EmptyInput, KTooLarge, TooFewPoints

MPD_SAMPLE_LIMIT = 20_000
_BLOCK = 512


def as_matrix(points) -> np.ndarray:
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D point matrix, got shape {X.shape}")
    return X


def euclidean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise distance; the one formula used for thresholds and queries."""
    diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return np.sqrt(np.sum(diff * diff, axis=-1))


class KDIndex:
    """Nearest-neighbour index with lowest-index tie breaking."""

    def __init__(self, points):
        self.points = as_matrix(points)
        if len(self.points) == 0:
            raise EmptyInput("cannot index an empty point set")
        self.tree = cKDTree(self.points)

    def __len__(self):
        return len(self.points)

    def radius_neighbors(self, eps: float) -> list[list[int]]:
        """For every indexed point, the indices within distance <= eps (self included)."""
        return self.tree.query_ball_point(self.points, eps)

    def nearest(self, q) -> tuple[int, float]:
        q = np.asarray(q, dtype=float)
        d0, _ = self.tree.query(q, k=1)
        # gather everything at (numerically) the same distance, then decide
        # with the canonical formula so ties resolve to the lowest index
        cand = self.tree.query_ball_point(q, d0 * (1 + 1e-9) + 1e-300)
        cand = np.sort(np.asarray(cand, dtype=np.intp))
        dist = euclidean(self.points[cand], q)
        j = int(np.argmin(dist))
        return int(cand[j]), float(dist[j])

    def kth_distances(self, k: int) -> np.ndarray:
        """Distance from each point to its k-th nearest other point."""
        d, _ = self.tree.query(self.points, k=k + 1)
        d = np.asarray(d).reshape(len(self.points), k + 1)
        return d[:, k]


@dataclass(frozen=True)
class KDistanceCurve:
    k: int
    distances: np.ndarray

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("rank,distance\n")
            for i, d in enumerate(self.distances):
                fh.write(f"{i},{float(d)!r}\n")


def k_distance(points, k: int) -> KDistanceCurve:
    X = as_matrix(points)
    n = len(X)
    if k < 1 or k >= n:
        raise KTooLarge(f"k must satisfy 1 <= k < n (k={k}, n={n})")
    return KDistanceCurve(k, np.sort(KDIndex(X).kth_distances(k)))


def mean_pairwise_distance(points, seed: int = 0) -> float:
    """Mean over all unordered pairs.  Above 20 000 points a seeded uniform
    sample of 20 000 points is used instead."""
    X = as_matrix(points)
    n = len(X)
    if n < 2:
        raise TooFewPoints("mean pairwise distance needs at least 2 points")
    if n > MPD_SAMPLE_LIMIT:
        rng = np.random.default_rng(seed)
        X = X[np.sort(rng.choice(n, MPD_SAMPLE_LIMIT, replace=False))]
        n = MPD_SAMPLE_LIMIT
    total = 0.0
    for start in range(0, n, _BLOCK):
        block = cdist(X[start:start + _BLOCK], X[start:])
        # keep the strict upper triangle relative to the global index
        rows = np.arange(block.shape[0])[:, None]
        cols = np.arange(block.shape[1])[None, :]
        total += float(block[cols > rows].sum())
    return total / (n * (n - 1) / 2)


def max_pairwise_distance(points) -> float:
    """Exact diameter of a point set (0 for fewer than two points).

    Uses :func:`euclidean` so thresholds compare bit-for-bit with query
    distances.
    """
    X = as_matrix(points)
    n, dim = X.shape
    best = 0.0
    step = max(1, int(2e7 // max(1, n * dim)))
    for start in range(0, n, step):
        d = euclidean(X[start:start + step, None, :], X[None, start:, :])
        if d.size:
            best = max(best, float(d.max()))
    return best
