"""Time the numba and numpy backends on the hot paths and check they agree.

    python benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import time

import numpy as np

from lens_forge import _accel
from lens_forge.geometry import PinholeIntrinsics, Pose, bounding_box, extend_box, look_at
from lens_forge.reference import FOV_DEG, box_obstacle_scene, box_obstacle_trajectory, reference_scene
from lens_forge.render import RenderConfig, render_image
from lens_forge.spatial import KDTree
from lens_forge.volume import extract_from_box


def cases():
    rng = np.random.default_rng(0)
    pts = rng.uniform(-10, 10, size=(200_000, 3))
    qs = rng.uniform(-10, 10, size=(200_000, 3))
    street = reference_scene()
    pose = Pose([0.0, -1.5, 1.5], look_at([0.0, -1.5, 1.5], [0.0, 4.0, 1.5]))
    intr = PinholeIntrinsics.from_fov(128, 128, FOV_DEG)
    cfg = RenderConfig(n_coarse=64, n_fine=32, t_near=0.05, t_far=9.0, stratified=True)
    room = box_obstacle_scene()
    b = extend_box(bounding_box(box_obstacle_trajectory()), 0.2)
    return {
        "kd-tree 200k build + 200k queries": lambda: KDTree(pts).query(qs)[0],
        "render 128x128, 64+32 samples": lambda: render_image(street, pose, intr, None, cfg,
                                                             np.random.default_rng(1)).pixels,
        "density volume r_v 96": lambda: extract_from_box(room, b, 96, 20.0).points,
    }


def timed(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - start)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not _accel.NUMBA_AVAILABLE:
        raise SystemExit("numba is not installed; nothing to compare")

    print(f"{'case':38s} {'numba s':>9s} {'numpy s':>9s} {'speedup':>8s} {'max diff':>9s}")
    for name, fn in cases().items():
        with _accel.backend("numba"):
            fn()  # compile or load the cache outside the timing
            t_nb, out_nb = timed(fn, args.repeat)
        with _accel.backend("numpy"):
            t_np, out_np = timed(fn, args.repeat)
        diff = float(np.max(np.abs(out_nb - out_np))) if out_nb.shape == out_np.shape else float("nan")
        print(f"{name:38s} {t_nb:9.3f} {t_np:9.3f} {t_np / t_nb:7.1f}x {diff:9.1e}")


if __name__ == "__main__":
    main()
