import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from featforge.state import STATE_DIM, EmptyMatrix, represent

# Rows: stage-1 statistic (count, std, min, max, q1, q2, q3) taken across the two
# columns; entries: the seven statistics of that row.  Worked by hand for
# X = [[1, 2], [3, 4]]: column stats are (2, 1, 1, 3, 1.5, 2, 2.5) and
# (2, 1, 2, 4, 2.5, 3, 3.5).
PINNED_2X2 = np.array([
    [2, 0.0, 2, 2, 2, 2, 2],
    [2, 0.0, 1, 1, 1, 1, 1],
    [2, 0.5, 1, 2, 1.25, 1.5, 1.75],
    [2, 0.5, 3, 4, 3.25, 3.5, 3.75],
    [2, 0.5, 1.5, 2.5, 1.75, 2.0, 2.25],
    [2, 0.5, 2, 3, 2.25, 2.5, 2.75],
    [2, 0.5, 2.5, 3.5, 2.75, 3.0, 3.25],
]).ravel()


def test_pinned_2x2_vector():
    X = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(represent(X), PINNED_2X2)
    np.testing.assert_array_equal(oracles.state_vector(X.tolist()), PINNED_2X2)


def test_all_zeros():
    m, n = 6, 4
    v = represent(np.zeros((m, n))).reshape(7, 7)
    np.testing.assert_array_equal(v[0], [n, 0, m, m, m, m, m])
    np.testing.assert_array_equal(v[1:], np.tile([n, 0, 0, 0, 0, 0, 0], (6, 1)))


def test_single_cell():
    v = represent(np.array([[5.0]])).reshape(7, 7)
    assert v[0].tolist() == [1, 0, 1, 1, 1, 1, 1]
    assert v[2].tolist() == [1, 0, 5, 5, 5, 5, 5]


@pytest.mark.parametrize("shape", [(0, 3), (3, 0), (4,)])
def test_empty_rejected(shape):
    with pytest.raises(EmptyMatrix):
        represent(np.zeros(shape))


def test_length_over_200_random_shapes():
    rng = np.random.default_rng(0)
    for _ in range(200):
        m, n = rng.integers(1, 51, 2)
        v = represent(rng.standard_normal((m, n)))
        assert v.shape == (STATE_DIM,) and np.all(np.isfinite(v))


matrices = st.tuples(st.integers(1, 12), st.integers(1, 12)).flatmap(
    lambda s: arrays(np.float64, s, elements=st.floats(-1e6, 1e6, allow_nan=False)))


@settings(max_examples=150, deadline=None)
@given(matrices, st.randoms(use_true_random=False))
def test_permutation_invariance_exact(X, rnd):
    rows = list(range(X.shape[0]))
    cols = list(range(X.shape[1]))
    rnd.shuffle(rows)
    rnd.shuffle(cols)
    base = represent(X)
    np.testing.assert_array_equal(represent(X[:, cols]), base)
    np.testing.assert_array_equal(represent(X[rows, :]), base)


@settings(max_examples=100, deadline=None)
@given(matrices)
def test_matches_scalar_oracle(X):
    ref = np.array(oracles.state_vector(X.tolist()))
    np.testing.assert_allclose(represent(X), ref, rtol=1e-9, atol=1e-9 * max(1.0, np.abs(X).max()))


@settings(max_examples=50, deadline=None)
@given(matrices, st.data())
def test_duplicate_column_consistent_with_oracle(X, data):
    j = data.draw(st.integers(0, X.shape[1] - 1))
    Y = np.column_stack([X, X[:, j]])
    ref = np.array(oracles.state_vector(Y.tolist()))
    np.testing.assert_allclose(represent(Y), ref, rtol=1e-9, atol=1e-9 * max(1.0, np.abs(X).max()))
    assert represent(Y).reshape(7, 7)[:, 0].tolist() == [X.shape[1] + 1] * 7


def test_nonfinite_inputs_yield_finite_state():
    X = np.array([[1.0, np.inf], [2.0, 3.0]])
    assert np.all(np.isfinite(represent(X)))
