"""HDBSCAN: mutual reachability MST, single linkage, condensed tree and
excess-of-mass cluster selection."""
from __future__ import annotations

from collections import deque

import numpy as np

from ..errors import EmptyInput, TooFewPoints
from .dbscan import ClusterAssignment
from .neighbors import KDIndex, as_matrix, euclidean

# lambda for zero-distance merges; finite so stabilities stay comparable
LAMBDA_MAX = 1e250


def core_distances(X: np.ndarray, min_samples: int) -> np.ndarray:
    """Distance to the min_samples-th nearest point, counting the point itself."""
    k = min(min_samples, len(X))
    if k <= 1:
        return np.zeros(len(X))
    d, _ = KDIndex(X).tree.query(X, k=k)
    return np.asarray(d).reshape(len(X), k)[:, -1]


def mutual_reachability_mst(X: np.ndarray, core: np.ndarray) -> np.ndarray:
    """Prim's algorithm on the dense mutual reachability graph.

    Returns rows (u, v, weight) in insertion order.  Ties pick the lowest
    vertex index.
    """
    n = len(X)
    in_tree = np.zeros(n, dtype=bool)
    best = np.full(n, np.inf)
    parent = np.zeros(n, dtype=np.intp)
    edges = np.empty((max(n - 1, 0), 3))
    v = 0
    for i in range(n - 1):
        in_tree[v] = True
        mr = np.maximum(euclidean(X, X[v]), np.maximum(core, core[v]))
        better = (mr < best) & ~in_tree
        best[better] = mr[better]
        parent[better] = v
        cand = np.where(in_tree, np.inf, best)
        nxt = int(np.argmin(cand))
        edges[i] = (parent[nxt], nxt, best[nxt])
        v = nxt
    return edges


def single_linkage(mst: np.ndarray, n: int) -> np.ndarray:
    """Dendrogram rows (left, right, distance, size); node n+i is row i."""
    order = np.argsort(mst[:, 2], kind="stable")
    parent = np.arange(2 * n - 1)
    size = np.concatenate([np.ones(n, dtype=np.intp), np.zeros(n - 1, dtype=np.intp)])

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    out = np.empty((n - 1, 4))
    for i, e in enumerate(order):
        a, b, w = int(mst[e, 0]), int(mst[e, 1]), mst[e, 2]
        ra, rb = find(a), find(b)
        node = n + i
        parent[ra] = parent[rb] = node
        size[node] = size[ra] + size[rb]
        out[i] = (ra, rb, w, size[node])
    return out


def condense(slt: np.ndarray, n: int, min_cluster_size: int):
    """Walk the dendrogram top-down keeping only splits into two clusters of
    at least ``min_cluster_size`` points.

    Returns parallel arrays (parent, child, lambda, child_size); cluster ids
    start at ``n`` (the root) and leaf ids are point indices.
    """
    root = 2 * n - 2

    def size_of(node):
        return 1 if node < n else int(slt[node - n, 3])

    def leaves(node):
        stack, out = [node], []
        while stack:
            x = stack.pop()
            if x < n:
                out.append(x)
            else:
                stack.extend((int(slt[x - n, 0]), int(slt[x - n, 1])))
        return sorted(out)

    relabel = {root: n}
    next_label = n + 1
    rows: list[tuple[int, int, float, int]] = []
    queue = deque([root])
    while queue:
        node = queue.popleft()
        if node < n:
            continue
        left, right, dist = int(slt[node - n, 0]), int(slt[node - n, 1]), slt[node - n, 2]
        lam = 1.0 / dist if dist > 0 else LAMBDA_MAX
        lam = min(lam, LAMBDA_MAX)
        cid = relabel[node]
        big_left = size_of(left) >= min_cluster_size
        big_right = size_of(right) >= min_cluster_size
        if big_left and big_right:
            for child in (left, right):
                relabel[child] = next_label
                rows.append((cid, next_label, lam, size_of(child)))
                next_label += 1
                queue.append(child)
        else:
            for child, big in ((left, big_left), (right, big_right)):
                if big:
                    relabel[child] = cid
                    queue.append(child)
                else:
                    rows.extend((cid, p, lam, 1) for p in leaves(child))
    arr = np.array(rows, dtype=float).reshape(-1, 4)
    return (arr[:, 0].astype(np.intp), arr[:, 1].astype(np.intp), arr[:, 2], arr[:, 3].astype(np.intp))


def stabilities(parent, child, lam, child_size, root: int) -> dict[int, float]:
    birth = {root: 0.0}
    for c, l in zip(child, lam):
        if c >= root:
            birth[int(c)] = float(l)
    stab = {c: 0.0 for c in birth}
    for p, l, s in zip(parent, lam, child_size):
        stab[int(p)] += (float(l) - birth[int(p)]) * int(s)
    return stab


def select_clusters(parent, child, stab: dict[int, float], root: int) -> list[int]:
    """Excess of mass selection; the root takes part only if it has no
    cluster children at all."""
    kids: dict[int, list[int]] = {}
    for p, c in zip(parent, child):
        if c >= root:
            kids.setdefault(int(p), []).append(int(c))
    if not kids.get(root):
        return [root]
    stab = dict(stab)
    selected = {c: True for c in stab if c != root}
    for c in sorted(selected, reverse=True):
        sub = sum(stab[k] for k in kids.get(c, ()))
        if sub > stab[c]:
            selected[c] = False
            stab[c] = sub
        else:
            stack = list(kids.get(c, ()))
            while stack:
                d = stack.pop()
                selected[d] = False
                stack.extend(kids.get(d, ()))
    return sorted(c for c, on in selected.items() if on)


def hdbscan(points, min_cluster_size: int = 5, min_samples: int | None = None) -> ClusterAssignment:
    X = as_matrix(points)
    n = len(X)
    if n == 0:
        raise EmptyInput("hdbscan needs at least one point")
    if min_cluster_size < 2:
        raise ValueError("min_cluster_size must be >= 2")
    if min_samples is None:
        min_samples = min_cluster_size
    if min_samples < 1:
        raise ValueError("min_samples must be >= 1")
    if n < min_cluster_size:
        raise TooFewPoints(f"{n} points < min_cluster_size={min_cluster_size}")
    if n == 1:
        return ClusterAssignment(np.zeros(1, dtype=np.intp))

    core = core_distances(X, min_samples)
    slt = single_linkage(mutual_reachability_mst(X, core), n)
    parent, child, lam, csize = condense(slt, n, min_cluster_size)
    root = n
    chosen = select_clusters(parent, child, stabilities(parent, child, lam, csize, root), root)

    if chosen == [root]:
        return ClusterAssignment(np.zeros(n, dtype=np.intp))

    up = {int(c): int(p) for p, c in zip(parent, child) if c >= root}
    label_of = {c: i for i, c in enumerate(chosen)}
    labels = np.full(n, -1, dtype=np.intp)
    for p, c in zip(parent, child):
        if c >= root:
            continue
        node = int(p)
        while node != root and node not in label_of:
            node = up[node]
        labels[c] = label_of.get(node, -1)
    return ClusterAssignment(labels)
