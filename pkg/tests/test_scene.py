import os

import numpy as np
import pytest

from lens_forge.errors import DomainError
from lens_forge.geometry import Aabb
from lens_forge.scene import (
    AnalyticScene,
    VoxelGridScene,
    box,
    interpolate_appearance,
    load_scene,
    query_field,
    save_scene,
    save_voxel_grid,
    slab,
    sphere,
    zero_appearance,
)

DATA = os.path.join(os.path.dirname(__file__), "data")
UP = np.array([0.0, 0.0, 1.0])


@pytest.fixture
def golden():
    return load_scene(os.path.join(DATA, "golden_scene.json"))


def test_golden_scene_parses(golden):
    assert len(golden.primitives) == 4
    assert [p.shape for p in golden.primitives] == ["box", "box", "sphere", "plane-slab"]
    assert golden.appearance_dim == 8 and len(golden.appearances) == 2
    assert golden.t_sigma == 20


def test_outside_everything_is_background(golden, backend):
    s = query_field(golden, [10, 10, 10], UP)
    assert s.sigma == 0.0
    assert s.color == pytest.approx((0.1, 0.2, 0.3))


@pytest.mark.parametrize("point,sigma,color", [
    ((0.9, 0.4, 1.2), 100.0, (1, 0, 0)),       # inside the axis-aligned box
    ((3.6, 0.0, 1.0), 50.0, (0, 1, 0)),        # inside the rotated box (45 deg about z)
    ((3.45, 0.45, 1.0), 0.0, (0.1, 0.2, 0.3)),  # inside its unrotated footprint only
    ((0.0, 3.4, 1.0), 30.0, (0, 0, 1)),
    ((7.0, -9.0, -0.01), 200.0, (0.5, 0.5, 0.5)),  # slab is unbounded laterally
])
def test_membership(golden, backend, point, sigma, color):
    s = query_field(golden, point, UP)
    assert s.sigma == sigma
    assert s.color == pytest.approx(color)


def test_overlap_takes_densest(backend):
    scene = AnalyticScene([
        box((0, 0, 0), (2, 2, 2), 10, (1, 0, 0)),
        sphere((0, 0, 0), 0.5, 40, (0, 1, 0)),
        box((0, 0, 0), (0.2, 0.2, 0.2), 40, (0, 0, 1)),  # tie with the sphere: first wins
    ])
    assert query_field(scene, (0, 0, 0), UP).color == pytest.approx((0, 1, 0))
    assert query_field(scene, (0, 0, 0), UP).sigma == 40
    assert query_field(scene, (0.8, 0, 0), UP).sigma == 10


def test_density_ignores_direction_and_appearance(golden, backend, rng):
    p = rng.uniform(-1, 4, size=(1000, 3))
    d1 = rng.normal(size=(1000, 3))
    d2 = rng.normal(size=(1000, 3))
    a1, a2 = golden.appearances
    s1, _ = golden.query(p, d1, a1)
    s2, _ = golden.query(p, d2, a2)
    s3, _ = golden.query(p, d1, None)
    assert np.array_equal(s1, s2) and np.array_equal(s1, s3)
    assert np.array_equal(s1, golden.density(p))
    assert golden.density_only(p[0]) == s1[0]


def test_appearance_is_affine_and_clamped(golden, backend):
    a = np.zeros(8)
    a[:6] = [0.5, -0.5, 0.0, 0.0, 0.1, 0.2]
    s = query_field(golden, (0.0, 0.0, 1.0), UP, a)
    assert s.color == pytest.approx((1.0, 0.1, 0.2))  # 1.5 clamps to 1
    base = query_field(golden, (0.0, 0.0, 1.0), UP, zero_appearance())
    assert base.color == query_field(golden, (0.0, 0.0, 1.0), UP).color


def test_appearance_length_checked(golden):
    with pytest.raises(DomainError):
        query_field(golden, (0, 0, 0), UP, np.zeros(5))
    with pytest.raises(DomainError):
        query_field(golden, (0, 0, 0), UP * 2)


def test_scene_round_trip(golden, tmp_path, rng):
    path = tmp_path / "s.json"
    save_scene(golden, path)
    again = load_scene(path)
    p = rng.uniform(-1, 4, size=(500, 3))
    s1, c1 = golden.query(p)
    s2, c2 = again.query(p)
    assert np.array_equal(s1, s2) and np.array_equal(c1, c2)


def test_bad_scene_file(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"primitives": [{"shape": "cone", "center": [0,0,0], "sigma": 1}]}')
    with pytest.raises(DomainError):
        load_scene(path)
    path.write_text("{not json")
    with pytest.raises(DomainError):
        load_scene(path)


# voxel grids: the golden lattice stores sigma = 10x + 2y + z and color = (x, y/2, z),
# which trilinear interpolation reproduces exactly everywhere inside the bounds


@pytest.fixture
def voxel():
    return load_scene(os.path.join(DATA, "voxel", "scene.json"))


def test_voxel_nodes_exact(voxel, backend):
    nodes = voxel.node_positions().reshape(-1, 3)
    sigma, rgb = voxel.query(nodes)
    np.testing.assert_allclose(sigma, voxel.sigma_grid.ravel(), atol=1e-9)
    np.testing.assert_allclose(rgb, voxel.color_grid.reshape(-1, 3), atol=1e-9)


def test_voxel_linear_field(voxel, backend, rng):
    p = rng.uniform([0, 0, 0], [1, 2, 1], size=(1000, 3))
    sigma, rgb = voxel.query(p)
    np.testing.assert_allclose(sigma, 10 * p[:, 0] + 2 * p[:, 1] + p[:, 2], atol=1e-5)
    np.testing.assert_allclose(rgb, np.column_stack([p[:, 0], p[:, 1] / 2, p[:, 2]]), atol=1e-6)


def test_voxel_outside_is_empty(voxel, backend):
    sigma, _ = voxel.query([[1.01, 1, 0.5], [-0.01, 1, 0.5], [0.5, 2.5, 0.5]])
    assert np.all(sigma == 0)


def test_voxel_continuity(voxel, backend, rng):
    p = rng.uniform([0, 0, 0], [1, 2, 1], size=(1000, 3))
    q = np.clip(p + rng.normal(size=p.shape) * 1e-6, [0, 0, 0], [1, 2, 1])
    a, _ = voxel.query(p)
    b, _ = voxel.query(q)
    assert np.max(np.abs(a - b)) < 1e-3


def test_voxel_round_trip(voxel, tmp_path):
    path = tmp_path / "v.json"
    save_voxel_grid(voxel, path)
    again = load_scene(path)
    assert np.array_equal(again.sigma_grid, voxel.sigma_grid)
    assert np.array_equal(again.color_grid, voxel.color_grid)
    assert (tmp_path / "grid.bin").read_bytes() == open(os.path.join(DATA, "voxel", "grid.bin"), "rb").read()


def test_voxel_bad_payload(tmp_path):
    (tmp_path / "grid.bin").write_bytes(b"\0" * 8)
    (tmp_path / "s.json").write_text('{"voxel_grid": {"resolution": [2,2,2], '
                                     '"bounds": {"min": [0,0,0], "max": [1,1,1]}, "path": "grid.bin"}}')
    with pytest.raises(DomainError):
        load_scene(tmp_path / "s.json")


def test_voxel_shape_mismatch():
    with pytest.raises(DomainError):
        VoxelGridScene(Aabb([0, 0, 0], [1, 1, 1]), np.zeros((2, 2, 2)), np.zeros((2, 2, 3)))


# appearance interpolation


def test_interpolate_single_and_identical(rng):
    a = np.arange(8.0)
    assert np.array_equal(interpolate_appearance([a], rng), a)
    np.testing.assert_allclose(interpolate_appearance([a, a.copy()], rng), a, atol=1e-15)


def test_interpolate_weight_mean():
    rng = np.random.default_rng(0)
    a, b = np.zeros(8), np.ones(8)
    w = np.array([interpolate_appearance([a, b], rng)[0] for _ in range(10000)])
    # component 0 equals the weight on b, which is uniform on [0, 1]
    assert abs(w.mean() - 0.5) <= 0.02


def test_interpolate_deterministic():
    bank = [np.random.default_rng(k).normal(size=8) for k in range(5)]
    x = interpolate_appearance(bank, np.random.default_rng(3))
    y = interpolate_appearance(bank, np.random.default_rng(3))
    assert np.array_equal(x, y)


def test_interpolate_errors(rng):
    with pytest.raises(DomainError):
        interpolate_appearance([], rng)
    with pytest.raises(DomainError):
        interpolate_appearance([np.zeros(3), np.zeros(4)], rng)


def test_primitive_validation():
    with pytest.raises(DomainError):
        box((0, 0, 0), (1, -1, 1), 1, (0, 0, 0))
    with pytest.raises(DomainError):
        sphere((0, 0, 0), 1, -5, (0, 0, 0))
    with pytest.raises(DomainError):
        slab((0, 0, 0), (0, 0, 1), -0.1, 1, (0, 0, 0))
