import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dvbtrack.metrics import OspaParams, aggregate, ospa, ospa_per_sensor

P = OspaParams()


def brute_force_ospa(X, Y, p, c):
    X, Y = np.asarray(X, float).reshape(-1, 2), np.asarray(Y, float).reshape(-1, 2)
    if len(X) > len(Y):
        X, Y = Y, X
    m, n = len(X), len(Y)
    if n == 0:
        return 0.0
    best = min(
        sum(min(np.linalg.norm(X[i] - Y[perm[i]]), c) ** p for i in range(m))
        for perm in itertools.permutations(range(n), m)
    )
    return ((best + c**p * (n - m)) / n) ** (1 / p)


point_sets = st.lists(
    st.tuples(st.floats(-200, 200), st.floats(-200, 200)), min_size=0, max_size=6
)


def test_identical_sets():
    X = np.random.default_rng(0).uniform(0, 1000, size=(7, 2))
    assert ospa(X, X, P) == 0.0
    assert ospa(X, X[::-1], P) == 0.0


def test_empty_estimate_gives_cutoff():
    assert ospa(np.zeros((0, 2)), [[1.0, 2.0], [3.0, 4.0]], P) == 50.0
    assert ospa([[1.0, 2.0]], [], P) == 50.0
    assert ospa([], [], P) == 0.0


def test_hand_cases():
    assert ospa([[3.0, 0.0]], [[0.0, 0.0]], P) == 3.0
    assert ospa([[3.0, 0.0]], [[0.0, 0.0], [100.0, 100.0]], P) == 26.5


def test_order_two():
    val = ospa([[3.0, 0.0]], [[0.0, 0.0], [100.0, 100.0]], OspaParams(p=2, c=50))
    assert val == pytest.approx(np.sqrt((9 + 2500) / 2), rel=1e-15)


@pytest.mark.parametrize("p, c", [(0.5, 50.0), (1.0, 0.0), (2.0, -1.0)])
def test_param_validation(p, c):
    with pytest.raises(ValueError):
        OspaParams(p=p, c=c)


def test_hungarian_matches_brute_force():
    rng = np.random.default_rng(42)
    for _ in range(1000):
        m, n = rng.integers(0, 8, size=2)
        X = rng.uniform(0, 120, size=(m, 2))
        Y = rng.uniform(0, 120, size=(n, 2))
        assert ospa(X, Y, P) == pytest.approx(brute_force_ospa(X, Y, 1.0, 50.0), rel=1e-12, abs=1e-12)


@settings(max_examples=200)
@given(point_sets, point_sets)
def test_symmetric_and_bounded(X, Y):
    a, b = ospa(X, Y, P), ospa(Y, X, P)
    assert a == pytest.approx(b, abs=1e-12)
    assert 0.0 <= a <= 50.0 + 1e-12


@settings(max_examples=200)
@given(point_sets, point_sets, point_sets)
def test_triangle_inequality(X, Y, Z):
    assert ospa(X, Z, P) <= ospa(X, Y, P) + ospa(Y, Z, P) + 1e-9


def test_per_sensor_shapes():
    truth = np.zeros((3, 2, 2))
    est = np.zeros((3, 4, 2, 2))
    est[1, 2, 0] = [4.0, 0.0]
    out = ospa_per_sensor(est, truth, P)
    assert out.shape == (3, 4)
    assert out[1, 2] == 2.0 and out.sum() == 2.0
    with pytest.raises(ValueError):
        ospa_per_sensor(est[:2], truth, P)


def test_aggregate():
    v = np.array([[1.0], [2.0], [6.0]])
    per_step, grand = aggregate(v)
    np.testing.assert_array_equal(per_step, [1.0, 2.0, 6.0])
    assert grand == 3.0
    per_step, _ = aggregate(np.array([[1.0, 3.0], [2.0, 8.0]]))
    np.testing.assert_array_equal(per_step, [2.0, 5.0])
    runs = np.random.default_rng(0).uniform(size=(4, 5, 6))
    a = aggregate(runs)
    b = aggregate(runs[:, :, ::-1])
    np.testing.assert_allclose(a[0], b[0], rtol=1e-15)
    assert a[1] == pytest.approx(runs.mean(), rel=1e-14)
    with pytest.raises(ValueError):
        aggregate(np.zeros(5))
