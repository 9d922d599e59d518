"""Virtual camera placement.

Candidates are cell centers of a regular grid over the extended pose box.
A candidate survives if it is at least ``d_sigma`` from every occupied point
and at most ``d_max`` from some real camera. The grid is refined
(``r <- r + sigma_r``) until at least ``n`` candidates survive; the survivors
are subsampled to exactly ``n`` and each gets the orientation of the nearest
real camera, perturbed by rotations about the local x, y and z axes (applied
in that order) with angles uniform in ``[-theta/2, theta/2]``.
"""

from dataclasses import dataclass, field

import numpy as np

from lens_forge.errors import DomainError, PlacementError
from lens_forge.geometry import (
    Pose,
    bounding_box,
    extend_box,
    poses_to_arrays,
    quat_from_axis_angle,
    quat_multiply,
    quat_normalize,
)
from lens_forge.spatial import KDTree
from lens_forge.volume import grid_axes

PLANAR = "planar-2d"
VOLUMETRIC = "volumetric-3d"
MODES = (PLANAR, VOLUMETRIC)

_AXES = np.eye(3)


@dataclass(frozen=True)
class PlacementConfig:
    n: int
    d_sigma: float
    d_max: float
    theta: float = 20.0
    r_0: int = 1
    sigma_r: int = 1
    mode: str = VOLUMETRIC
    e_max: float = 0.2
    max_iterations: int = 64
    seed: int = 0
    plane_height: float = None
    volume_pruning: bool = True

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"n must be a positive integer, got {self.n}")
        if not self.d_sigma > 0:
            raise DomainError(f"d_sigma must be > 0, got {self.d_sigma}")
        if not self.d_max > 0:
            raise DomainError(f"d_max must be > 0, got {self.d_max}")
        if not self.d_sigma < self.d_max:
            raise DomainError(f"d_sigma ({self.d_sigma}) must be smaller than d_max ({self.d_max})")
        if not self.theta >= 0:
            raise DomainError(f"theta must be >= 0, got {self.theta}")
        if self.r_0 < 1 or self.sigma_r < 1 or self.max_iterations < 1:
            raise DomainError("r_0, sigma_r and max_iterations must be positive")
        if self.mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.e_max >= 0:
            raise DomainError(f"e_max must be >= 0, got {self.e_max}")


@dataclass(frozen=True, eq=False)
class VirtualCameraSet:
    poses: list
    iterations_used: int
    final_resolution: int
    spacing: float
    candidate_counts: list = field(default_factory=list)  # (n_i, n_hat_i) per iteration


def generate_candidates(box, resolution_param, mode=VOLUMETRIC, plane_height=None):
    """Grid candidates; in planar mode only x and y vary and z = ``plane_height``."""
    return _candidates(box, resolution_param, mode, plane_height)[0]


def _candidates(box, r, mode, plane_height):
    if mode == VOLUMETRIC:
        coords, spacing = grid_axes(box, r)
        return np.stack(np.meshgrid(*coords, indexing="ij"), axis=-1).reshape(-1, 3), spacing
    if mode != PLANAR:
        raise DomainError(f"unknown placement mode {mode!r}")
    if box.edges[0] <= 0 or box.edges[1] <= 0:
        raise DomainError("planar placement needs a box with nonzero x and y extent")
    if plane_height is None:
        raise DomainError("planar placement needs a plane height")
    coords, spacing = grid_axes(box, r, axes=(0, 1))
    xy = np.stack(np.meshgrid(*coords, indexing="ij"), axis=-1).reshape(-1, 2)
    return np.column_stack([xy, np.full(len(xy), float(plane_height))]), spacing


def prune_candidates(candidates, occupied_index, real_camera_index, d_sigma, d_max):
    """Keep candidates with clearance >= d_sigma and some real camera within d_max."""
    return candidates[_keep_mask(candidates, occupied_index, real_camera_index, d_sigma, d_max)]


def _keep_mask(candidates, occupied_index, real_camera_index, d_sigma, d_max):
    candidates = np.asarray(candidates, dtype=np.float64).reshape(-1, 3)
    keep = real_camera_index.nearest_distance(candidates) <= d_max
    if occupied_index is not None and len(occupied_index):
        idx = np.flatnonzero(keep)
        keep[idx] = occupied_index.nearest_distance(candidates[idx]) >= d_sigma
    return keep


def perturbation(angles_deg):
    """Quaternion for intrinsic rotations about x, then y, then z."""
    angles_deg = np.asarray(angles_deg, dtype=np.float64)
    qx = quat_from_axis_angle(_AXES[0], angles_deg[..., 0])
    qy = quat_from_axis_angle(_AXES[1], angles_deg[..., 1])
    qz = quat_from_axis_angle(_AXES[2], angles_deg[..., 2])
    return quat_multiply(quat_multiply(qx, qy), qz)


def _perturb(q0, theta, rng, count):
    angles = rng.uniform(-theta / 2.0, theta / 2.0, size=(count, 3))
    q = quat_normalize(quat_multiply(q0, perturbation(angles)))
    return q, angles


def assign_orientation(position, training_poses, theta, rng):
    """Nearest training orientation (by position) with a random per-axis perturbation."""
    if len(training_poses) == 0:
        raise DomainError("need at least one training pose")
    positions, quats = poses_to_arrays(training_poses)
    d = np.linalg.norm(positions - np.asarray(position, dtype=np.float64), axis=1)
    q0 = quats[int(np.argmin(d))]
    q, _ = _perturb(q0[None], theta, rng, 1)
    return q[0]


def assign_orientations(positions, training_poses, theta, rng, index=None):
    """Vectorised :func:`assign_orientation`; consumes the stream in input order."""
    train_pos, train_q = poses_to_arrays(training_poses)
    if index is None:
        index = KDTree(train_pos)
    _, nearest = index.query(np.asarray(positions, dtype=np.float64).reshape(-1, 3))
    q, _ = _perturb(train_q[nearest], theta, rng, len(nearest))
    return q


def place_cameras(training_poses, occupied, config):
    """Place ``config.n`` virtual cameras. Deterministic for a fixed seed.

    ``occupied`` is an :class:`~lens_forge.volume.OccupiedPointSet` or an
    ``(m, 3)`` array of occupied points (may be empty).
    Raises :class:`PlacementError` if ``max_iterations`` refinements do not
    yield ``n`` feasible candidates.
    """
    if len(training_poses) == 0:
        raise DomainError("need at least one training pose")
    box = extend_box(bounding_box(training_poses), config.e_max)
    train_pos, _ = poses_to_arrays(training_poses)
    plane_height = config.plane_height
    if config.mode == PLANAR:
        if plane_height is None:
            plane_height = float(train_pos[:, 2].mean())
        if not box.min[2] <= plane_height <= box.max[2]:
            raise DomainError(f"plane height {plane_height} outside the extended box z-range")

    occ_points = getattr(occupied, "points", occupied)
    occ_points = np.zeros((0, 3)) if occ_points is None else np.asarray(occ_points, dtype=np.float64)
    occ_index = KDTree(occ_points) if config.volume_pruning else None
    cam_index = KDTree(train_pos)

    counts = []
    r = config.r_0
    for it in range(config.max_iterations):
        cands, spacing = _candidates(box, r, config.mode, plane_height)
        kept = cands[_keep_mask(cands, occ_index, cam_index, config.d_sigma, config.d_max)]
        counts.append((len(cands), len(kept)))
        if len(kept) >= config.n:
            break
        if it + 1 < config.max_iterations:
            r += config.sigma_r
    else:
        raise PlacementError(
            f"only {len(kept)} feasible candidates for n={config.n} after {config.max_iterations} "
            f"iterations (last resolution {r})",
            resolution=r, feasible=len(kept))

    rng = np.random.default_rng(config.seed)
    if len(kept) > config.n:
        pick = np.sort(rng.choice(len(kept), size=config.n, replace=False))
        kept = kept[pick]
    quats = assign_orientations(kept, training_poses, config.theta, rng, index=cam_index)
    poses = [Pose(p, q) for p, q in zip(kept, quats)]
    return VirtualCameraSet(poses, len(counts), r, spacing, counts)
