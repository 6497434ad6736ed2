import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from flowguard.errors import DimensionMismatch, EmptyMatrix, NonFiniteInput
from flowguard.preprocess import ScalerParams, fit, fit_transform, transform
from oracles import hand_quartiles


def col(*v):
    return np.array(v, dtype=float)[:, None]


@pytest.mark.parametrize("values, median, iqr", [
    ([1, 2, 3, 4, 5], 3.0, 2.0),
    ([5, 5, 5], 5.0, 0.0),
    ([1, 2], 1.5, 0.5),
])
def test_fit_examples(values, median, iqr):
    p = fit(col(*values))
    assert p.median[0] == median and p.iqr[0] == iqr


def test_transform_examples():
    p = fit(col(1, 2, 3, 4, 5))
    assert transform(p, [5.0])[0] == 1.0
    assert transform(p, [3.0])[0] == 0.0
    const = fit(col(5, 5, 5))
    assert transform(const, [7.0])[0] == 2.0


def test_quartiles_match_hand_formula():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(37, 5))
    p = fit(X)
    for j in range(5):
        q1, med, q3 = hand_quartiles(X[:, j].tolist())
        assert p.median[j] == pytest.approx(med, abs=1e-12)
        assert p.iqr[j] == pytest.approx(q3 - q1, abs=1e-12)


def test_errors():
    with pytest.raises(EmptyMatrix):
        fit(np.empty((0, 3)))
    with pytest.raises(NonFiniteInput):
        fit([[1.0, np.nan]])
    with pytest.raises(DimensionMismatch):
        transform(fit(np.ones((3, 4))), np.ones(3))


def test_params_dict_round_trip():
    p = fit(np.random.default_rng(0).normal(size=(20, 3)))
    q = ScalerParams.from_dict(p.to_dict())
    assert np.array_equal(p.median, q.median) and np.array_equal(p.iqr, q.iqr)


finite = st.floats(-1e6, 1e6, allow_nan=False, allow_subnormal=False)


@settings(max_examples=80, deadline=None)
@given(X=arrays(float, st.tuples(st.integers(1, 40), st.integers(1, 6)), elements=finite))
def test_scaling_invariants(X):
    p, Z = fit_transform(X)
    q1, med, q3 = np.percentile(X, [25, 50, 75], axis=0)
    assert np.allclose(transform(p, med), 0, atol=1e-9)
    for j in range(X.shape[1]):
        if p.iqr[j] > 0:
            row1, row3 = med.copy(), med.copy()
            row1[j], row3[j] = q1[j], q3[j]
            assert abs(transform(p, row3)[j] - transform(p, row1)[j] - 1) <= 1e-9
        else:
            assert np.array_equal(Z[:, j], X[:, j] - p.median[j])
