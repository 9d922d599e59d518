import numpy as np
import pytest

from lens_forge.errors import DomainError
from lens_forge.geometry import Aabb, Pose
from lens_forge.scene import AnalyticScene, box
from lens_forge.volume import (
    VolumeConfig,
    build_grid,
    extract_density_volume,
    extract_from_box,
    grid_spacing,
    load_occupied,
    save_occupied,
)


def test_unit_cube_resolution_two():
    pts = build_grid(Aabb([0, 0, 0], [1, 1, 1]), 2)
    assert grid_spacing(Aabb([0, 0, 0], [1, 1, 1]), 2) == 0.5
    want = [(x, y, z) for x in (0.25, 0.75) for y in (0.25, 0.75) for z in (0.25, 0.75)]
    np.testing.assert_array_equal(pts, want)


def test_rectangular_counts():
    b = Aabb([0, 0, 0], [1, 2, 4])
    pts = build_grid(b, 4)
    assert grid_spacing(b, 4) == 0.25
    assert len(pts) == 4 * 8 * 16 == 512
    assert np.all(pts >= b.min) and np.all(pts <= b.max)


@pytest.mark.parametrize("edges,r", [((1.0, 1.3, 0.7), 5), ((3.0, 3.0, 3.0), 7), ((0.3, 2.0, 1.1), 3)])
def test_counts_follow_floor_rule(edges, r):
    b = Aabb([0, 0, 0], edges)
    lam = min(edges) / r
    want = int(np.prod([np.floor(e / lam + 1e-9) for e in edges]))
    assert len(build_grid(b, r)) == want


def test_same_order_of_magnitude_across_scales():
    counts = [len(build_grid(Aabb([0, 0, 0], np.array([1.0, 1.2, 0.9]) * s), 32)) for s in (0.1, 1.0, 50.0)]
    assert max(counts) == min(counts)


def test_degenerate_axis_gets_midlayer():
    b = Aabb([0, 0, 1.5], [2, 1, 1.5])
    pts = build_grid(b, 2)
    assert np.all(pts[:, 2] == 1.5)
    assert len(pts) == 4 * 2
    with pytest.raises(DomainError):
        build_grid(Aabb([1, 1, 1], [1, 1, 1]), 4)


def test_empty_field_gives_empty_set():
    occ = extract_density_volume(AnalyticScene([]), [Pose([0, 0, 0]), Pose([1, 1, 1])], VolumeConfig(r_v=8, e_max=0))
    assert occ.count == 0 and occ.grid_count == 512


def test_box_scene_brute_force(backend):
    scene = AnalyticScene([box((0.5, 0.5, 0.5), (0.2, 0.2, 0.2), 100, (1, 1, 1))])
    poses = [Pose([0, 0, 0]), Pose([1, 1, 1])]
    occ = extract_density_volume(scene, poses, VolumeConfig(r_v=16, t_sigma=20, e_max=0))
    assert occ.grid_count == 4096
    grid = (np.arange(16) + 0.5) / 16
    brute = np.array([(x, y, z) for x in grid for y in grid for z in grid
                      if all(0.4 <= c <= 0.6 for c in (x, y, z))])
    np.testing.assert_array_equal(occ.points, brute)
    assert occ.spacing == 1 / 16


def test_threshold_monotone_and_roundtrip(backend):
    scene = AnalyticScene([box((0, 0, 0), (1, 1, 1), 30, (1, 0, 0)), box((0.5, 0.5, 0.5), (1, 1, 1), 80, (0, 1, 0))])
    b = Aabb([-1, -1, -1], [1.5, 1.5, 1.5])
    lo = extract_from_box(scene, b, 20, 20.0)
    hi = extract_from_box(scene, b, 20, 50.0)
    lo_set = {tuple(p) for p in lo.points}
    assert all(tuple(p) in lo_set for p in hi.points)
    assert len(hi.points) < len(lo.points) <= lo.grid_count
    assert np.all(scene.density(lo.points) > 20.0)
    assert np.all(scene.density(hi.points) > 50.0)
    assert len({tuple(p) for p in lo.points}) == len(lo.points)
    again = extract_from_box(scene, b, 20, 20.0)
    np.testing.assert_array_equal(lo.points, again.points)


def test_threshold_equal_is_excluded():
    scene = AnalyticScene([box((0, 0, 0), (1, 1, 1), 20, (1, 0, 0))])
    assert extract_from_box(scene, Aabb([-1, -1, -1], [1, 1, 1]), 8, 20.0).count == 0


def test_backends_agree():
    from lens_forge import _accel

    scene = AnalyticScene([box((0, 0, 0), (1, 1, 1), 30, (1, 0, 0))])
    b = Aabb([-1, -1, -1], [1, 1, 1])
    with _accel.backend("numpy"):
        a = extract_from_box(scene, b, 24, 20.0).points
    if _accel.NUMBA_AVAILABLE:
        with _accel.backend("numba"):
            c = extract_from_box(scene, b, 24, 20.0).points
        np.testing.assert_array_equal(a, c)


def test_occupied_file_round_trip(tmp_path):
    scene = AnalyticScene([box((0, 0, 0), (0.5, 0.5, 0.5), 30, (1, 0, 0))])
    occ = extract_from_box(scene, Aabb([-1, -1, -1], [1, 1, 1]), 10, 20.0)
    path = tmp_path / "occ.txt"
    save_occupied(occ, path)
    header = path.read_text().splitlines()[0]
    assert header.startswith("# spacing=0.2 box=-1.0 -1.0 -1.0 1.0 1.0 1.0 t_sigma=20.0")
    back = load_occupied(path)
    np.testing.assert_array_equal(back.points, occ.points)
    assert back.spacing == occ.spacing and back.t_sigma == 20.0


def test_volume_config_validation():
    with pytest.raises(DomainError):
        VolumeConfig(r_v=1)
    with pytest.raises(DomainError):
        VolumeConfig(t_sigma=-1)
    with pytest.raises(DomainError):
        VolumeConfig(e_max=-0.5)
    assert VolumeConfig().r_v == 128 and VolumeConfig().t_sigma == 20
