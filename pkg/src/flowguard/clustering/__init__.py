from .dbscan import ClusterAssignment, dbscan
from .hdbscan import hdbscan
from .neighbors import (KDIndex, KDistanceCurve, euclidean, k_distance, max_pairwise_distance,
                        mean_pairwise_distance)
from .scores import dbcv, silhouette

__all__ = [
    "ClusterAssignment", "KDIndex", "KDistanceCurve", "dbcv", "dbscan", "euclidean", "hdbscan",
    "k_distance", "max_pairwise_distance", "mean_pairwise_distance", "silhouette",
]
