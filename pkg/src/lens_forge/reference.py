"""Reference analytic scenes and camera trajectories used by tests and the CLI.

Densities are in 1/m. Solid primitives use ``SOLID_SIGMA = 100``, which is
opaque over a few centimeters and sits well above the default threshold
``t_sigma = 20``; empty space is exactly 0.
"""

import numpy as np

from lens_forge.geometry import Pose, look_at
from lens_forge.scene import AnalyticScene, box, slab, sphere

SOLID_SIGMA = 100.0
FOV_DEG = 60.0

_PALETTE = [
    (0.90, 0.10, 0.10), (0.10, 0.70, 0.20), (0.15, 0.25, 0.90), (0.95, 0.80, 0.10),
    (0.80, 0.20, 0.80), (0.10, 0.80, 0.80), (0.95, 0.50, 0.10), (0.45, 0.25, 0.10),
    (0.60, 0.90, 0.30), (0.30, 0.10, 0.50), (0.95, 0.60, 0.70), (0.20, 0.40, 0.30),
]


def appearance_bank(count, dim=8, scale=0.04, seed=7):
    """Small random gains/biases standing in for per-image appearance embeddings."""
    rng = np.random.default_rng(seed)
    bank = np.zeros((count, dim))
    bank[:, :6] = rng.uniform(-scale, scale, size=(count, 6))
    return [a for a in bank]


def slab_scene(thickness=0.4, sigma=5.0, color=(1.0, 0.0, 0.0), center=(0.0, 0.0, -0.8), normal=(0.0, 0.0, 1.0)):
    return AnalyticScene([slab(center, normal, thickness, sigma, color)])


# ---------------------------------------------------------------------------
# box-obstacle scene: a central block ringed by cameras that look at it


def box_obstacle_scene():
    """Central 1.2 x 1.2 x 1.12 m block (four colored quadrants) inside a walled room.

    With :func:`box_obstacle_trajectory` and ``e_max = 0.2`` the extended pose
    box is 2.4 x 2.4 x 1.4 m and the block fills 20% of it.
    """
    prims = []
    h = 1.12
    for k, (sx, sy) in enumerate([(-1, -1), (1, -1), (-1, 1), (1, 1)]):
        prims.append(box((0.3 * sx, 0.3 * sy, 1.0), (0.6, 0.6, h), SOLID_SIGMA, _PALETTE[k]))
    prims += _room(half=3.0, height=3.0, palette_offset=4)
    return AnalyticScene(prims, background_color=(0.0, 0.0, 0.0), appearances=appearance_bank(16), t_sigma=20.0)


def box_obstacle_trajectory(count=40, radius=1.0, z_range=(0.5, 1.5)):
    """Cameras circling the block at five stepped heights, looking inward."""
    poses = []
    for k in range(count):
        a = 2 * np.pi * k / count
        z = z_range[0] + (z_range[1] - z_range[0]) * (k % 5) / 4
        p = np.array([radius * np.cos(a), radius * np.sin(a), z])
        poses.append(Pose(p, look_at(p, (0.0, 0.0, z))))
    return poses


# ---------------------------------------------------------------------------
# street scene: a painted facade with pillars in front, walked past in a line


def reference_scene():
    """Facade of twelve colored panels at y = 4, pillars and a sphere in front,
    and one bollard inside the strip walked by :func:`line_trajectory`."""
    prims = []
    for k in range(12):
        x = -5.5 + k
        prims.append(box((x, 4.0, 1.5), (1.0, 0.2, 3.0), SOLID_SIGMA, _PALETTE[k]))
        # upper band, shifted palette, doubles the horizontal texture
        prims.append(box((x, 3.95, 2.6), (1.0, 0.2, 0.5), SOLID_SIGMA + 1, _PALETTE[(k + 5) % 12]))
    prims.append(box((-2.0, 1.5, 1.0), (0.4, 0.4, 2.0), SOLID_SIGMA, (0.95, 0.95, 0.95)))
    prims.append(box((1.5, 2.2, 0.75), (0.6, 0.6, 1.5), SOLID_SIGMA, (0.05, 0.05, 0.05)))
    prims.append(sphere((0.0, 1.0, 0.4), 0.4, SOLID_SIGMA, (0.9, 0.4, 0.6)))
    # bollard inside the walkable strip
    prims.append(box((1.0, -0.8, 1.0), (0.3, 0.3, 2.0), SOLID_SIGMA, (0.2, 0.3, 0.8)))
    # row of posts close to the strip; their parallax separates yaw from sideways motion
    for k in range(9):
        x = -4.0 + k
        prims.append(box((x, 0.4, 0.9), (0.15, 0.15, 1.8), SOLID_SIGMA, _PALETTE[(3 * k + 1) % 12]))
    prims.append(slab((0.0, 0.0, -0.05), (0.0, 0.0, 1.0), 0.1, SOLID_SIGMA, (0.55, 0.55, 0.5)))
    return AnalyticScene(prims, background_color=(0.6, 0.75, 0.95), appearances=appearance_bank(16), t_sigma=20.0)


def line_trajectory(count=50, x_range=(-3.0, 3.0), y=-1.5, z=1.5, look_y=4.0):
    """Cameras evenly spaced along x, all facing the facade (+y)."""
    poses = []
    for x in np.linspace(x_range[0], x_range[1], count):
        p = np.array([x, y, z])
        poses.append(Pose(p, look_at(p, (x, look_y, z))))
    return poses


def _room(half, height, palette_offset=0):
    prims = []
    for k, (c, size) in enumerate([
        ((half, 0.0, height / 2), (0.1, 2 * half, height)),
        ((-half, 0.0, height / 2), (0.1, 2 * half, height)),
        ((0.0, half, height / 2), (2 * half, 0.1, height)),
        ((0.0, -half, height / 2), (2 * half, 0.1, height)),
    ]):
        prims.append(box(c, size, SOLID_SIGMA, _PALETTE[(palette_offset + k) % len(_PALETTE)]))
    prims.append(slab((0.0, 0.0, -0.05), (0.0, 0.0, 1.0), 0.1, SOLID_SIGMA, (0.5, 0.5, 0.5)))
    return prims
