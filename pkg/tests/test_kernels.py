"""The numba and numpy kernel paths must agree."""

import os
import subprocess
import sys

import numpy as np
import pytest

from lens_forge import _accel, kernels
from lens_forge.scene import AnalyticScene, box, slab, sphere

needs_numba = pytest.mark.skipif(not _accel.NUMBA_AVAILABLE, reason="numba not installed")


def both(fn, *args):
    with _accel.backend("numba"):
        a = fn(*args)
    with _accel.backend("numpy"):
        b = fn(*args)
    return a, b


@needs_numba
def test_analytic_backends_agree(rng):
    scene = AnalyticScene([
        box((0, 0, 0), (1, 2, 0.5), 40, (1, 0, 0), rotation=(0, 0, 0.3826834323650898, 0.9238795325112867)),
        sphere((0.5, 0.5, 0), 0.7, 40, (0, 1, 0)),
        slab((0, 0, -0.5), (0.3, 0.1, 1.0), 0.2, 90, (0, 0, 1)),
    ], background_color=(0.1, 0.1, 0.1))
    p = rng.uniform(-2, 2, size=(20000, 3))
    (sa, ca), (sb, cb) = both(scene.query, p)
    np.testing.assert_array_equal(sa, sb)
    np.testing.assert_allclose(ca, cb, atol=1e-15)


@needs_numba
def test_composite_backends_agree(rng):
    sigma = rng.uniform(0, 30, size=(500, 40)) * (rng.random((500, 40)) < 0.3)
    rgb = rng.random((500, 40, 3))
    t = np.sort(rng.uniform(0.1, 4, size=(500, 40)), axis=1)
    (ca, ta, wa), (cb, tb, wb) = both(kernels.composite, sigma, rgb, t, np.full(500, 4.5), np.array([0.2, 0.3, 0.4]))
    np.testing.assert_allclose(ca, cb, atol=1e-12)
    np.testing.assert_allclose(ta, tb, atol=1e-12)
    np.testing.assert_allclose(wa, wb, atol=1e-12)


@needs_numba
def test_sample_pdf_backends_agree(rng):
    edges = np.cumsum(rng.uniform(0.01, 0.1, size=(200, 33)), axis=1)
    w = rng.random((200, 32)) * (rng.random((200, 32)) < 0.5)
    w[0] = 0.0
    u = rng.random((200, 64))
    a, b = both(kernels.sample_pdf, edges, w, u)
    np.testing.assert_allclose(a, b, atol=1e-12)
    assert np.all(a >= edges[:, :1]) and np.all(a <= edges[:, -1:])


@needs_numba
def test_trilinear_backends_agree(rng):
    sg = rng.random((4, 5, 6)) * 10
    cg = rng.random((4, 5, 6, 3))
    p = rng.uniform(-0.2, 1.2, size=(5000, 3))
    lo, hi = np.zeros(3), np.ones(3)
    (sa, ca), (sb, cb) = both(kernels.trilinear, p, lo, hi, sg, cg, np.zeros(3))
    np.testing.assert_allclose(sa, sb, atol=1e-12)
    np.testing.assert_allclose(ca, cb, atol=1e-12)


@needs_numba
def test_kd_build_backends_agree(rng):
    pts = rng.normal(size=(3000, 3))
    a, b = both(kernels.kd_build, pts, 16)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)


def test_composite_single_opaque_sample():
    sigma = np.array([[0.0, 1e6, 0.0]])
    rgb = np.array([[[1, 0, 0], [0, 1, 0], [0, 0, 1]]], dtype=float)
    t = np.array([[0.5, 1.0, 1.5]])
    for name in _accel_backends():
        with _accel.backend(name):
            c, T, w = kernels.composite(sigma, rgb, t, np.array([2.0]), np.zeros(3))
        np.testing.assert_allclose(c[0], [0, 1, 0], atol=1e-12)
        assert T[0] == 0.0


def _accel_backends():
    return ["numba", "numpy"] if _accel.NUMBA_AVAILABLE else ["numpy"]


def test_env_flag_selects_numpy():
    code = "from lens_forge import _accel; print(_accel.backend_name())"
    env = dict(os.environ, LENS_FORGE_NUMBA="0")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"


def test_set_backend_validation():
    with pytest.raises(ValueError):
        _accel.set_backend("fortran")
    before = _accel.backend_name()
    with _accel.backend("numpy"):
        assert _accel.backend_name() == "numpy"
    assert _accel.backend_name() == before
