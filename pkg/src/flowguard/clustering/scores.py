"""Clustering quality scores: Silhouette and density based validation (DBCV)."""
from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist

from ..errors import DegenerateClustering, SingleCluster
from .neighbors import as_matrix

_BLOCK = 1024


def silhouette(points, labels) -> float:
    """Mean silhouette over non-noise points.

    Singleton-cluster points score 0, and so does a point with a = b = 0.
    """
    X = as_matrix(points)
    labels = np.asarray(labels)
    keep = labels != -1
    X, labels = X[keep], labels[keep]
    uniq, lab = np.unique(labels, return_inverse=True)
    if len(uniq) < 2:
        raise SingleCluster("silhouette needs at least two clusters")
    k = len(uniq)
    onehot = np.zeros((len(X), k))
    onehot[np.arange(len(X)), lab] = 1.0
    counts = onehot.sum(axis=0)

    scores = np.empty(len(X))
    for start in range(0, len(X), _BLOCK):
        stop = min(start + _BLOCK, len(X))
        sums = cdist(X[start:stop], X) @ onehot
        own = lab[start:stop]
        rows = np.arange(stop - start)
        own_n = counts[own]
        a = np.divide(sums[rows, own], own_n - 1, out=np.zeros(stop - start), where=own_n > 1)
        mean_other = sums / counts
        mean_other[rows, own] = np.inf
        b = mean_other.min(axis=1)
        denom = np.maximum(a, b)
        s = np.divide(b - a, denom, out=np.zeros(stop - start), where=denom > 0)
        s[own_n <= 1] = 0.0
        scores[start:stop] = s
    return float(scores.mean())


def all_points_core_distance(D: np.ndarray, dim: int) -> np.ndarray:
    """Per-point density from the within-cluster distance matrix ``D``:
    (mean_j d_j^-dim)^(-1/dim) over the other members, evaluated in a scaled
    form that cannot overflow."""
    n = len(D)
    out = np.empty(n)
    for i in range(n):
        others = np.delete(D[i], i)
        m = others.min()
        if m == 0:
            out[i] = 0.0
            continue
        out[i] = m * np.mean((m / others) ** dim) ** (-1.0 / dim)
    return out


def _prim(W: np.ndarray) -> list[tuple[int, int, float]]:
    n = len(W)
    in_tree = np.zeros(n, dtype=bool)
    best = np.full(n, np.inf)
    parent = np.zeros(n, dtype=np.intp)
    edges = []
    v = 0
    for _ in range(n - 1):
        in_tree[v] = True
        better = (W[v] < best) & ~in_tree
        best[better] = W[v][better]
        parent[better] = v
        nxt = int(np.argmin(np.where(in_tree, np.inf, best)))
        edges.append((int(parent[nxt]), nxt, float(best[nxt])))
        v = nxt
    return edges


def dbcv(points, labels) -> float:
    """Density based clustering validation in [-1, 1].

    Noise points (label -1) count toward the total used for cluster weights but
    carry no validity of their own.  A cluster whose MST has no internal edges
    uses all of its MST edges for the sparseness; one with no internal vertices
    uses all of its members for separation.
    """
    X = as_matrix(points)
    labels = np.asarray(labels)
    n_total, dim = X.shape
    ids = [c for c in np.unique(labels) if c != -1]
    if len(ids) < 2:
        raise DegenerateClustering("DBCV needs at least two clusters")
    members = {c: np.flatnonzero(labels == c) for c in ids}
    if any(len(m) < 2 for m in members.values()):
        raise DegenerateClustering("every cluster needs at least two points for DBCV")

    core, internal, sparseness = {}, {}, {}
    for c in ids:
        Xi = X[members[c]]
        D = cdist(Xi, Xi)
        apcd = all_points_core_distance(D, dim)
        mr = np.maximum(D, np.maximum.outer(apcd, apcd))
        edges = _prim(mr)
        deg = np.zeros(len(Xi), dtype=np.intp)
        for u, v, _ in edges:
            deg[u] += 1
            deg[v] += 1
        inner = np.flatnonzero(deg > 1)
        inner_edges = [w for u, v, w in edges if deg[u] > 1 and deg[v] > 1]
        sparseness[c] = max(inner_edges) if inner_edges else max(w for _, _, w in edges)
        internal[c] = inner if len(inner) else np.arange(len(Xi))
        core[c] = apcd

    score = 0.0
    for c in ids:
        Xi = X[members[c]][internal[c]]
        ci = core[c][internal[c]]
        sep = np.inf
        for o in ids:
            if o == c:
                continue
            Xo = X[members[o]][internal[o]]
            co = core[o][internal[o]]
            mr = np.maximum(cdist(Xi, Xo), np.maximum.outer(ci, co))
            sep = min(sep, float(mr.min()))
        dsc = sparseness[c]
        denom = max(sep, dsc)
        validity = (sep - dsc) / denom if denom > 0 else 0.0
        score += len(members[c]) / n_total * validity
    return float(score)
