import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.cluster import HDBSCAN as SkHDBSCAN
from sklearn.metrics import silhouette_score

from flowguard.clustering import (KDIndex, dbcv, dbscan, hdbscan, k_distance, max_pairwise_distance,
                                  mean_pairwise_distance, silhouette)
from flowguard.errors import (DegenerateClustering, EmptyInput, KTooLarge, SingleCluster,
                              TooFewPoints)
from oracles import blobs, brute_dbcv, brute_dbscan, brute_silhouette, same_partition


# -- DBSCAN ------------------------------------------------------------------

def test_dbscan_example():
    X = [(0, 0), (0, 1), (1, 0), (10, 10), (10, 11)]
    a = dbscan(X, 1.5, 2)
    assert a.n_clusters == 2 and a.n_noise == 0
    assert a.labels.tolist() == [0, 0, 0, 1, 1]


def test_dbscan_single_point_is_noise():
    assert dbscan([[3.0, 4.0]], 1.0, 2).labels.tolist() == [-1]


def test_dbscan_eps_beyond_diameter():
    X = np.random.default_rng(1).normal(size=(30, 3))
    assert dbscan(X, 100.0, 1).n_clusters == 1


def test_dbscan_validation():
    with pytest.raises(ValueError):
        dbscan([[0.0]], 0.0, 2)
    with pytest.raises(ValueError):
        dbscan([[0.0]], 1.0, 0)
    with pytest.raises(EmptyInput):
        dbscan(np.empty((0, 2)), 1.0, 2)


@pytest.mark.parametrize("seed", range(6))
def test_dbscan_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    dim = (2, 34)[seed % 2]
    X = blobs(rng, rng.uniform(-5, 5, size=(3, dim)), 25, 1.0)
    eps = float(np.median(np.linalg.norm(X - X[0], axis=1))) * 0.3
    for ms in (2, 4):
        assert np.array_equal(dbscan(X, eps, ms).labels, brute_dbscan(X, eps, ms))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), perm_seed=st.integers(0, 10_000))
def test_dbscan_core_partition_permutation_invariant(seed, perm_seed):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 6, size=(40, 2)).astype(float)
    perm = np.random.default_rng(perm_seed).permutation(len(X))
    a = dbscan(X, 1.0, 3).labels
    b = dbscan(X[perm], 1.0, 3).labels
    counts = np.array([len(KDIndex(X).radius_neighbors(1.0)[i]) for i in range(len(X))])
    core = counts >= 3
    # core membership and noise never depend on order; only border ties may
    assert same_partition(a[core], b[np.argsort(perm)][core])
    assert np.array_equal(a == -1, b[np.argsort(perm)] == -1)


def test_noise_non_increasing_in_eps():
    for seed in range(5):
        X = np.random.default_rng(seed).normal(size=(80, 4))
        noise = [dbscan(X, e, 5).n_noise for e in (0.5, 1.0, 1.5, 2.0, 3.0)]
        assert noise == sorted(noise, reverse=True)


# -- HDBSCAN -----------------------------------------------------------------

def test_hdbscan_two_tight_blobs():
    X = np.vstack([np.random.default_rng(0).normal(0, 0.1, (5, 2)),
                   np.random.default_rng(1).normal(100, 0.1, (5, 2))])
    a = hdbscan(X, min_cluster_size=3)
    assert a.n_clusters == 2 and a.n_noise == 0
    assert len(set(a.labels[:5])) == 1 and len(set(a.labels[5:])) == 1


def test_hdbscan_five_points_one_root():
    X = np.random.default_rng(5).uniform(size=(5, 2))
    a = hdbscan(X, min_cluster_size=5)
    assert a.n_clusters <= 1
    assert a.n_clusters == 1 or a.n_noise == 5


def test_hdbscan_duplicates():
    a = hdbscan(np.ones((8, 3)), min_cluster_size=3)
    assert a.n_clusters == 1 and a.n_noise == 0


def test_hdbscan_too_few_points():
    with pytest.raises(TooFewPoints):
        hdbscan(np.zeros((3, 2)), min_cluster_size=5)


def _tied(X, i, ms, ours, ref):
    """True when point i reaches its cluster under both labelings at the same
    mutual reachability distance, so either attachment is a valid MST."""
    D = np.linalg.norm(X[:, None] - X[None], axis=2)
    core = np.sort(D, axis=1)[:, ms - 1]
    mr = np.maximum(D[i], np.maximum(core, core[i]))
    mr[i] = np.inf
    a = mr[(ours == ours[i]) & (np.arange(len(X)) != i)].min()
    b = mr[(ref == ref[i]) & (np.arange(len(X)) != i)].min()
    return a == b


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("mcs, ms", [(5, None), (8, 3), (4, 1)])
def test_hdbscan_matches_reference(seed, mcs, ms):
    rng = np.random.default_rng(seed)
    X = np.vstack([blobs(rng, [(0, 0), (6, 0), (0, 7)], 30, 1.0), rng.uniform(-4, 10, (15, 2))])
    ours = hdbscan(X, mcs, ms).labels
    ref = SkHDBSCAN(min_cluster_size=mcs, min_samples=ms).fit(X).labels_
    # map our cluster ids onto the reference by majority vote
    mapping = {c: np.bincount(ref[ours == c][ref[ours == c] >= 0]).argmax()
               for c in set(ours.tolist()) - {-1}}
    mapped = np.array([mapping.get(c, -1) for c in ours])
    assert np.array_equal(ours == -1, ref == -1)
    for i in np.flatnonzero(mapped != ref):
        assert _tied(X, i, ms or mcs, ours, ref)
    assert (mapped != ref).sum() <= 2


# -- scores ------------------------------------------------------------------

def test_silhouette_hand_value():
    s = silhouette([[0.0], [1.0], [10.0], [11.0]], [0, 0, 1, 1])
    assert abs(s - 0.899749) <= 1e-6


def test_silhouette_degenerate_cases():
    X = [[0.0, 0.0]] * 3 + [[5.0, 0.0]] * 3
    assert silhouette(X, [0, 0, 0, 1, 1, 1]) == 1.0
    assert silhouette([[1.0, 1.0]] * 4, [0, 0, 1, 1]) == 0.0
    with pytest.raises(SingleCluster):
        silhouette([[0.0], [1.0], [9.0]], [0, 0, -1])


@pytest.mark.parametrize("seed", range(4))
def test_silhouette_against_references(seed):
    rng = np.random.default_rng(seed)
    X = blobs(rng, [(0, 0, 0), (3, 1, 0), (0, 4, 2)], 20, 1.0)
    labels = np.repeat([0, 1, 2], 20)
    labels[rng.choice(60, 5, replace=False)] = -1
    ours = silhouette(X, labels)
    keep = labels != -1
    assert ours == pytest.approx(silhouette_score(X[keep], labels[keep]), abs=1e-12)
    assert ours == pytest.approx(brute_silhouette(X.tolist(), labels.tolist()), abs=1e-12)


def test_dbcv_separated_blobs():
    X = [(0, 0), (0, 1), (1, 0), (50, 50), (50, 51), (51, 50)]
    assert dbcv(X, [0, 0, 0, 1, 1, 1]) > 0.9


def test_dbcv_random_labels_negative():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(60, 2))
    assert dbcv(X, rng.integers(0, 2, size=60)) < 0


@pytest.mark.parametrize("seed", range(6))
def test_dbcv_matches_definition(seed):
    rng = np.random.default_rng(seed)
    dim = 2 + seed % 3
    X = blobs(rng, rng.uniform(-4, 4, (3, dim)), 12, 1.0)
    labels = np.repeat([0, 1, 2], 12)
    labels[rng.choice(36, 3, replace=False)] = -1
    assert dbcv(X, labels) == pytest.approx(brute_dbcv(X.tolist(), labels.tolist()), abs=1e-9)


def test_dbcv_mirror_invariance():
    rng = np.random.default_rng(8)
    X = blobs(rng, [(0, 0), (5, 5)], 15, 1.0)
    labels = np.repeat([0, 1], 15)
    assert dbcv(X, labels) == pytest.approx(dbcv(X * [-1, 1], labels), abs=1e-12)


def test_dbcv_needs_two_clusters():
    with pytest.raises(DegenerateClustering):
        dbcv([[0.0], [1.0], [2.0]], [0, 0, -1])


# -- k-distance and pairwise distances ---------------------------------------

def test_k_distance_examples():
    X = [[0.0], [1.0], [3.0]]
    assert k_distance(X, 1).distances.tolist() == [1, 1, 2]
    assert k_distance(X, 2).distances.tolist() == [2, 3, 3]
    assert k_distance([[1.0], [1.0], [1.0], [4.0]], 1).distances[0] == 0
    with pytest.raises(KTooLarge):
        k_distance(X, 3)


def test_k_distance_csv(tmp_path):
    k_distance([[0.0], [1.0], [3.0]], 1).to_csv(tmp_path / "k.csv")
    assert (tmp_path / "k.csv").read_text().splitlines() == ["rank,distance", "0,1.0", "1,1.0", "2,2.0"]


def test_pairwise_distance_examples():
    assert mean_pairwise_distance([[0.0], [1.0], [3.0]]) == 2.0
    assert mean_pairwise_distance(np.ones((5, 3))) == 0.0
    assert mean_pairwise_distance([[0.0, 0.0], [3.0, 4.0]]) == 5.0
    assert max_pairwise_distance([[0.0, 0.0], [0.0, 2.0]]) == 2.0
    assert max_pairwise_distance([[1.0, 1.0]]) == 0.0


def test_mean_pairwise_blocked_matches_direct():
    X = np.random.default_rng(2).normal(size=(700, 5))
    sub = X[::7]
    direct = np.mean([math.dist(sub[i], sub[j]) for i in range(len(sub)) for j in range(i + 1, len(sub))])
    assert mean_pairwise_distance(sub) == pytest.approx(direct, rel=1e-12)


def test_nearest_ties_go_to_lowest_index():
    idx = KDIndex([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]])
    assert idx.nearest([0.0, 0.0]) == (0, 1.0)
