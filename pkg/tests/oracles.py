"""Slow, obviously-correct reference implementations used as test oracles.

Each one is written straight from the textbook definition with plain Python
loops, sharing no code with the package.
"""
import math
from itertools import combinations

import numpy as np


def brute_dbscan(X, eps, min_samples):
    """Core points are joined when within eps; components are numbered by
    their smallest core index; a border point goes to the lowest-numbered
    component that has a core within eps of it."""
    n = len(X)
    near = [[j for j in range(n) if math.dist(X[i], X[j]) <= eps] for i in range(n)]
    core = [len(near[i]) >= min_samples for i in range(n)]
    comp = [-1] * n
    next_id = 0
    for i in range(n):
        if not core[i] or comp[i] != -1:
            continue
        comp[i] = next_id
        stack = [i]
        while stack:
            u = stack.pop()
            for v in near[u]:
                if core[v] and comp[v] == -1:
                    comp[v] = next_id
                    stack.append(v)
        next_id += 1
    labels = list(comp)
    for i in range(n):
        if not core[i]:
            owners = [comp[j] for j in near[i] if core[j]]
            labels[i] = min(owners) if owners else -1
    return np.array(labels)


def same_partition(a, b):
    """Labels equal up to renaming, with noise (-1) fixed."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape or not np.array_equal(a == -1, b == -1):
        return False
    fwd, back = {}, {}
    for x, y in zip(a.tolist(), b.tolist()):
        if fwd.setdefault(x, y) != y or back.setdefault(y, x) != x:
            return False
    return True


def brute_detect(train, labels, queries):
    """Nearest-cluster threshold detection by exhaustive search.  Returns a list of
    (verdict, nearest_index) pairs."""
    train = [tuple(map(float, p)) for p in train]
    mpdi = {}
    for c in set(labels):
        pts = [p for p, l in zip(train, labels) if l == c]
        mpdi[c] = max((math.dist(p, q) for p, q in combinations(pts, 2)), default=0.0)
    out = []
    for q in queries:
        best, best_d = None, math.inf
        for i, p in enumerate(train):
            d = math.dist(p, q)
            if d < best_d:
                best, best_d = i, d
        out.append(("Benign" if best_d <= mpdi[labels[best]] else "Anomaly", best))
    return out


def brute_silhouette(X, labels):
    idx = [i for i in range(len(X)) if labels[i] != -1]
    clusters = sorted({labels[i] for i in idx})
    total = 0.0
    for i in idx:
        own = [j for j in idx if labels[j] == labels[i] and j != i]
        if not own:
            continue
        a = sum(math.dist(X[i], X[j]) for j in own) / len(own)
        b = min(sum(math.dist(X[i], X[j]) for j in idx if labels[j] == c)
                / sum(1 for j in idx if labels[j] == c)
                for c in clusters if c != labels[i])
        if max(a, b) > 0:
            total += (b - a) / max(a, b)
    return total / len(idx)


def _prim_ties_low(n, weight):
    """Prim from vertex 0.  Mutual reachability weights tie often, so the rule
    is pinned: cheapest crossing edge, ties to the lowest new vertex, then to
    the earliest-added tree vertex."""
    order = [0]
    tree = []
    while len(order) < n:
        best = None
        for v in range(n):
            if v in order:
                continue
            for u in order:
                w = weight(u, v)
                if best is None or w < best[0] or (w == best[0] and v < best[2]):
                    best = (w, u, v)
        w, u, v = best
        tree.append((u, v, w))
        order.append(v)
    return tree


def brute_dbcv(X, labels):
    """Density based clustering validation from its definition, with the
    same fallbacks and MST tie rule as the package."""
    X = [tuple(map(float, p)) for p in X]
    dim = len(X[0])
    n_total = len(X)
    ids = sorted({l for l in labels if l != -1})
    members = {c: [i for i in range(n_total) if labels[i] == c] for c in ids}

    def apcd(i, group):
        vals = [(1.0 / math.dist(X[i], X[j])) ** dim for j in group if j != i]
        return (sum(vals) / len(vals)) ** (-1.0 / dim)

    core = {i: apcd(i, members[labels[i]]) for c in ids for i in members[c]}

    def mreach(i, j):
        return max(math.dist(X[i], X[j]), core[i], core[j])

    inner, dsc = {}, {}
    for c in ids:
        m = members[c]
        tree = _prim_ties_low(len(m), lambda a, b: mreach(m[a], m[b]))
        deg = [0] * len(m)
        for a, b, _ in tree:
            deg[a] += 1
            deg[b] += 1
        internal_edges = [w for a, b, w in tree if deg[a] > 1 and deg[b] > 1]
        dsc[c] = max(internal_edges) if internal_edges else max(w for _, _, w in tree)
        nodes = [m[a] for a in range(len(m)) if deg[a] > 1]
        inner[c] = nodes or list(m)

    score = 0.0
    for c in ids:
        dspc = min(mreach(i, j) for o in ids if o != c for i in inner[c] for j in inner[o])
        v = (dspc - dsc[c]) / max(dspc, dsc[c])
        score += len(members[c]) / n_total * v
    return score


def hand_quartiles(values):
    """Linear-interpolation quartiles: position (n-1)*q in the sorted list."""
    s = sorted(values)
    n = len(s)

    def q(p):
        pos = (n - 1) * p
        lo = math.floor(pos)
        hi = min(lo + 1, n - 1)
        return s[lo] + (s[hi] - s[lo]) * (pos - lo)

    return q(0.25), q(0.5), q(0.75)


def blobs(rng, centers, n_per, spread):
    return np.vstack([rng.normal(c, spread, size=(n_per, len(c))) for c in centers])
