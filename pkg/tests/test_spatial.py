import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.spatial import cKDTree

from lens_forge.spatial import KDTree, build_index


def brute(points, queries):
    d = np.sqrt(((queries[:, None, :] - points[None, :, :]) ** 2).sum(axis=2))
    return d.min(axis=1), d.argmin(axis=1)


def test_empty_index_returns_inf(backend):
    t = build_index(np.zeros((0, 3)))
    d, i = t.query(np.array([[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]]))
    assert np.all(np.isinf(d)) and np.all(i == -1)
    assert len(t) == 0


def test_three_four_five(backend):
    d, i = build_index([[0.0, 0.0, 0.0]]).query(np.array([3.0, 4.0, 0.0]))
    assert d == 5.0 and i == 0


@pytest.mark.parametrize("n", [1, 15, 16, 17, 1000])
def test_matches_linear_scan(backend, rng, n):
    pts = rng.uniform(-1, 1, size=(n, 3))
    q = rng.uniform(-1.5, 1.5, size=(1000, 3))
    d, i = KDTree(pts).query(q)
    bd, bi = brute(pts, q)
    np.testing.assert_allclose(d, bd, rtol=0, atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(pts[i] - q, axis=1), bd, rtol=0, atol=1e-12)


def test_clustered_and_duplicate_points(backend, rng):
    base = rng.normal(size=(50, 3))
    pts = np.concatenate([base, base, base + 1e-9, np.zeros((40, 3))])
    q = rng.normal(size=(300, 3))
    d, i = KDTree(pts, leafsize=4).query(q)
    bd, bi = brute(pts, q)
    np.testing.assert_allclose(d, bd, rtol=0, atol=1e-12)
    # exact duplicates resolve to the lowest index
    d0, i0 = KDTree(pts).query(np.array([0.0, 0.0, 0.0]))
    assert d0 == 0.0 and i0 == 150


def test_degenerate_planar_points(backend, rng):
    pts = rng.uniform(-5, 5, size=(2000, 3))
    pts[:, 2] = 1.0
    q = rng.uniform(-6, 6, size=(500, 3))
    np.testing.assert_allclose(KDTree(pts).nearest_distance(q), brute(pts, q)[0], atol=1e-12)


def test_agrees_with_scipy(backend, rng):
    pts = rng.normal(size=(5000, 3)) * [10, 1, 0.1]
    q = rng.normal(size=(2000, 3)) * [10, 1, 0.1]
    want, _ = cKDTree(pts).query(q)
    np.testing.assert_allclose(KDTree(pts).nearest_distance(q), want, atol=1e-12)


def test_input_not_mutated(rng):
    pts = rng.normal(size=(20, 3))
    KDTree(pts)
    pts[0, 0] = 1.0  # still writable


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 60), st.just(3)), elements=st.floats(-100, 100)),
       arrays(np.float64, st.tuples(st.integers(1, 20), st.just(3)), elements=st.floats(-100, 100)))
def test_property_exact(pts, q):
    np.testing.assert_allclose(KDTree(pts).nearest_distance(q), brute(pts, q)[0], rtol=0, atol=1e-9)
