"""DBSCAN over a k-d tree neighbourhood index."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import EmptyInput
from .neighbors import KDIndex, as_matrix


@dataclass(frozen=True)
class ClusterAssignment:
    labels: np.ndarray  # -1 = noise, clusters 0..m-1

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    @property
    def n_noise(self) -> int:
        return int(np.count_nonzero(self.labels == -1))


def dbscan(points, eps: float, min_samples: int, index: KDIndex | None = None) -> ClusterAssignment:
    """Label points by density reachability.

    A point is core when at least ``min_samples`` points (itself included) lie
    within ``eps``.  Clusters are seeded from core points in ascending index
    order and a border point keeps the first cluster that reaches it.
    """
    X = as_matrix(points)
    if len(X) == 0:
        raise EmptyInput("dbscan needs at least one point")
    if not eps > 0:
        raise ValueError("eps must be > 0")
    if min_samples < 1:
        raise ValueError("min_samples must be >= 1")

    index = index or KDIndex(X)
    neigh = index.radius_neighbors(eps)
    core = np.fromiter((len(nb) >= min_samples for nb in neigh), dtype=bool, count=len(X))
    labels = np.full(len(X), -1, dtype=np.intp)

    cluster = 0
    for seed in np.flatnonzero(core):
        if labels[seed] != -1:
            continue
        labels[seed] = cluster
        stack = [seed]
        while stack:
            j = stack.pop()
            for k in neigh[j]:
                if labels[k] == -1:
                    labels[k] = cluster
                    if core[k]:
                        stack.append(k)
        cluster += 1
    return ClusterAssignment(labels)
