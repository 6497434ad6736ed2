import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flowguard import detector
from flowguard.clustering import dbscan
from flowguard.detector import build_model, classify, classify_batch, classify_scaled, load_model, save_model
from flowguard.errors import AllNoise, CorruptFile, DimensionMismatch, NonFiniteInput, VersionMismatch
from flowguard.preprocess import ScalerParams, fit_transform
from oracles import brute_detect

IDENTITY2 = ScalerParams(np.zeros(2), np.ones(2))


def two_point_model():
    return build_model([[0.0, 0.0], [0.0, 2.0]], [0, 0], IDENTITY2)


def test_mpdi_examples():
    assert two_point_model().mpdi == {0: 2.0}
    m = build_model([[0.0, 0.0], [3.0, 4.0], [0.0, 1.0], [9.0, 9.0], [9.0, 10.0], [50.0, 50.0]],
                    [0, 0, 0, 1, 1, 2], ScalerParams(np.zeros(2), np.ones(2)))
    assert m.mpdi == {0: 5.0, 1: 1.0, 2: 0.0}


def test_noise_dropped():
    m = build_model([[0.0, 0.0], [5.0, 5.0], [0.0, 1.0]], [0, -1, 0], IDENTITY2)
    assert len(m.train_points) == 2 and set(m.train_labels.tolist()) == {0}
    with pytest.raises(AllNoise):
        build_model([[0.0, 0.0]], [-1], IDENTITY2)


def test_classify_examples():
    m = two_point_model()
    r = classify(m, [0.0, 1.0])
    assert (r.verdict, r.distance, r.nearest_cluster, r.threshold) == ("Benign", 1.0, 0, 2.0)
    assert classify(m, [0.0, 2.0]).distance == 0.0
    r = classify(m, [0.0, 5.0])
    assert (r.verdict, r.distance) == ("Anomaly", 3.0)
    assert classify(m, [0.0, 4.0]).verdict == "Benign"  # d == mpdi


def test_scaling_applied_before_distance():
    m = build_model([[0.0, 0.0], [0.0, 2.0]], [0, 0], ScalerParams(np.array([10.0, 0.0]), np.array([2.0, 1.0])))
    assert classify(m, [10.0, 1.0]).distance == 1.0


def test_query_errors():
    m = two_point_model()
    with pytest.raises(DimensionMismatch):
        classify(m, [1.0, 2.0, 3.0])
    with pytest.raises(NonFiniteInput):
        classify(m, [np.nan, 0.0])
    with pytest.raises(DimensionMismatch) as info:
        classify_batch(m, [[0.0, 0.0], [0.0]])
    assert info.value.row == 1


def test_batch_is_stateless():
    rng = np.random.default_rng(0)
    m = build_model(rng.normal(size=(30, 2)), rng.integers(0, 3, 30), IDENTITY2)
    Q = rng.normal(size=(40, 2)) * 2
    perm = rng.permutation(40)
    assert classify_batch(m, []) == []
    assert classify_batch(m, Q[perm]) == [classify_batch(m, Q)[i] for i in perm]


@pytest.mark.parametrize("seed", range(8))
def test_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    n, dim = rng.integers(20, 200), (2, 5, 34)[seed % 3]
    X = rng.normal(size=(n, dim))
    labels = rng.integers(0, 4, size=n)
    m = build_model(X, labels, ScalerParams(np.zeros(dim), np.ones(dim)))
    Q = rng.normal(size=(50, dim)) * 1.5
    got = [(r.verdict, r.distance) for r in classify_batch(m, Q)]
    want = brute_detect(X.tolist(), labels.tolist(), Q.tolist())
    assert [g[0] for g in got] == [w[0] for w in want]


def test_training_points_are_benign():
    rng = np.random.default_rng(1)
    raw = rng.normal(size=(80, 4))
    scaler, Z = fit_transform(raw)
    asg = dbscan(Z, 1.2, 3)
    m = build_model(Z, asg, scaler)
    keep = asg.labels != -1
    assert all(r.verdict == "Benign" for r in classify_batch(m, raw[keep]))


@settings(max_examples=40, deadline=None)
@given(step=st.floats(0, 10), extra=st.floats(0, 10))
def test_verdict_monotone_in_distance(step, extra):
    m = two_point_model()
    near = classify_scaled(m, np.array([-step, 0.0]))
    far = classify_scaled(m, np.array([-(step + extra), 0.0]))
    assert near.nearest_cluster == far.nearest_cluster
    assert not (near.is_anomaly and not far.is_anomaly)


def test_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    raw = rng.normal(size=(60, 3)) * [1.0, 10.0, 0.1]
    scaler, Z = fit_transform(raw)
    m = build_model(Z, dbscan(Z, 1.0, 3), scaler, {"algo": "dbscan", "params": {"eps": 1.0}})
    save_model(m, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    Q = rng.normal(size=(100, 3)) * [1.0, 10.0, 0.1]
    assert classify_batch(back, Q) == classify_batch(m, Q)
    assert back.meta == m.meta


def test_version_and_corruption(tmp_path):
    path = tmp_path / "m.json"
    save_model(two_point_model(), path)
    body = json.loads(path.read_text())
    body["format_version"] = detector.FORMAT_VERSION + 1
    bumped = tmp_path / "v.json"
    bumped.write_text(json.dumps(body))
    with pytest.raises(VersionMismatch):
        load_model(bumped)
    cut = tmp_path / "c.json"
    cut.write_text(path.read_text()[:-20])
    with pytest.raises(CorruptFile):
        load_model(cut)
    body = json.loads(path.read_text())
    body["mpdi"]["0"] = 99.0
    tampered = tmp_path / "t.json"
    tampered.write_text(json.dumps(body))
    with pytest.raises(CorruptFile):
        load_model(tampered)
