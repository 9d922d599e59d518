"""SE(3) and pinhole camera math.

Conventions
-----------
* Quaternions are Hamilton, stored ``(qx, qy, qz, qw)``.
* Poses are camera-to-world. The camera frame is right-handed with +x to the
  right, +y up and the optical axis along -z.
* World frame is z-up (used by planar placement).
* Distances are meters. Angles are degrees at public boundaries, radians
  inside helpers whose name ends in ``_rad``.
"""

from dataclasses import dataclass

import numpy as np

from lens_forge.errors import DomainError

UNIT_TOL = 1e-9
IDENTITY_QUAT = np.array([0.0, 0.0, 0.0, 1.0])


def _readonly(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# quaternions


def quat_normalize(q):
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(n == 0) or not np.all(np.isfinite(n)):
        raise DomainError("cannot normalise a zero or non-finite quaternion")
    return q / n


def quat_conjugate(q):
    q = np.asarray(q, dtype=np.float64)
    return q * np.array([-1.0, -1.0, -1.0, 1.0])


def quat_multiply(a, b):
    """Hamilton product ``a * b`` (broadcasts over leading axes)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    ax, ay, az, aw = np.moveaxis(a, -1, 0)
    bx, by, bz, bw = np.moveaxis(b, -1, 0)
    return np.stack(
        [
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
            aw * bw - ax * bx - ay * by - az * bz,
        ],
        axis=-1,
    )


def quat_from_axis_angle_rad(axis, angle):
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis, axis=-1, keepdims=True)
    angle = np.asarray(angle, dtype=np.float64)[..., None]
    return np.concatenate([axis * np.sin(angle / 2), np.cos(angle / 2)], axis=-1)


def quat_from_axis_angle(axis, degrees):
    return quat_from_axis_angle_rad(axis, np.deg2rad(degrees))


def quat_to_matrix(q):
    q = np.asarray(q, dtype=np.float64)
    x, y, z, w = np.moveaxis(q, -1, 0)
    m = np.stack(
        [
            1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w),
            2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w),
            2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y),
        ],
        axis=-1,
    )
    return m.reshape(q.shape[:-1] + (3, 3))


def matrix_to_quat(m):
    """Rotation matrix to unit quaternion (Shepperd's method), ``qw >= 0``."""
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (3, 3):
        return np.stack([matrix_to_quat(mi) for mi in m.reshape(-1, 3, 3)]).reshape(m.shape[:-2] + (4,))
    tr = np.trace(m)
    if tr > 0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = [(m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s, 0.25 * s]
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = 2.0 * np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
        q = [0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s, (m[2, 1] - m[1, 2]) / s]
    elif m[1, 1] > m[2, 2]:
        s = 2.0 * np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2])
        q = [(m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s, (m[0, 2] - m[2, 0]) / s]
    else:
        s = 2.0 * np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1])
        q = [(m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s, (m[1, 0] - m[0, 1]) / s]
    q = quat_normalize(q)
    return q if q[3] >= 0 else -q


def rotate(q, v):
    """Rotate vectors ``v`` by quaternion(s) ``q``."""
    return np.einsum("...ij,...j->...i", quat_to_matrix(q), np.asarray(v, dtype=np.float64))


def unit_quaternion(q):
    """Validate and return ``q`` as a unit quaternion array.

    Inputs within 1e-6 of unit norm are renormalised; anything further off is
    rejected.
    """
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (4,) or not np.all(np.isfinite(q)):
        raise DomainError(f"quaternion must be 4 finite values, got {q!r}")
    n = np.linalg.norm(q)
    if abs(n - 1.0) > 1e-6:
        raise DomainError(f"quaternion norm {n} is not 1")
    return q / n


def rotation_angle_between(a, b):
    """Geodesic angle in degrees between two rotations, in [0, 180].

    Equal to ``2 acos(|<a, b>|)``; evaluated through ``atan2`` of the relative
    rotation so that small angles keep full precision.
    """
    r = quat_multiply(quat_conjugate(a), b)
    vec = np.linalg.norm(r[..., :3], axis=-1)
    return np.rad2deg(2.0 * np.arctan2(vec, np.abs(r[..., 3])))


def look_at(position, target, up=(0.0, 0.0, 1.0)):
    """Camera-to-world quaternion for a camera at ``position`` facing ``target``."""
    position = np.asarray(position, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - position
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, up)
    if np.linalg.norm(right) < 1e-12:
        raise DomainError("look_at: forward direction is parallel to up")
    right /= np.linalg.norm(right)
    cam_up = np.cross(right, forward)
    # camera axes as columns: x=right, y=up, z=-forward
    return matrix_to_quat(np.stack([right, cam_up, -forward], axis=1))


# ---------------------------------------------------------------------------
# value types


@dataclass(frozen=True, eq=False)
class Pose:
    """Camera-to-world pose: position in meters and an ``xyzw`` unit quaternion."""

    position: np.ndarray
    orientation: np.ndarray = None

    def __post_init__(self):
        p = np.asarray(self.position, dtype=np.float64)
        if p.shape != (3,) or not np.all(np.isfinite(p)):
            raise DomainError(f"pose position must be 3 finite values, got {self.position!r}")
        object.__setattr__(self, "position", _readonly(p))
        q = IDENTITY_QUAT if self.orientation is None else self.orientation
        object.__setattr__(self, "orientation", _readonly(unit_quaternion(q)))

    @classmethod
    def from_array(cls, a):
        a = np.asarray(a, dtype=np.float64)
        return cls(a[:3], a[3:7])

    def as_array(self):
        """``[x, y, z, qx, qy, qz, qw]``"""
        return np.concatenate([self.position, self.orientation])

    def rotation_matrix(self):
        return quat_to_matrix(self.orientation)

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return bool(np.array_equal(self.position, other.position) and np.array_equal(self.orientation, other.orientation))

    def __hash__(self):
        return hash((self.position.tobytes(), self.orientation.tobytes()))

    def __repr__(self):
        p = ", ".join(f"{v:.6g}" for v in self.position)
        q = ", ".join(f"{v:.6g}" for v in self.orientation)
        return f"Pose(position=({p}), orientation=({q}))"


def poses_to_arrays(poses):
    """Stack poses into ``(n, 3)`` positions and ``(n, 4)`` quaternions."""
    if len(poses) == 0:
        return np.zeros((0, 3)), np.zeros((0, 4))
    return np.stack([p.position for p in poses]), np.stack([p.orientation for p in poses])


@dataclass(frozen=True, eq=False)
class Aabb:
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.min, dtype=np.float64)
        hi = np.asarray(self.max, dtype=np.float64)
        if lo.shape != (3,) or hi.shape != (3,):
            raise DomainError("box corners must be 3-vectors")
        if np.any(lo > hi):
            raise DomainError(f"box min {lo} exceeds max {hi}")
        object.__setattr__(self, "min", _readonly(lo))
        object.__setattr__(self, "max", _readonly(hi))

    @property
    def edges(self):
        return self.max - self.min

    @property
    def diagonal(self):
        return float(np.linalg.norm(self.edges))

    @property
    def center(self):
        return 0.5 * (self.min + self.max)

    def contains(self, points, tol=0.0):
        points = np.asarray(points, dtype=np.float64)
        return np.all((points >= self.min - tol) & (points <= self.max + tol), axis=-1)

    def __eq__(self, other):
        if not isinstance(other, Aabb):
            return NotImplemented
        return bool(np.array_equal(self.min, other.min) and np.array_equal(self.max, other.max))

    def __hash__(self):
        return hash((self.min.tobytes(), self.max.tobytes()))

    def __repr__(self):
        return f"Aabb(min={self.min.tolist()}, max={self.max.tolist()})"


def bounding_box(poses):
    """Smallest axis-aligned box containing every pose position."""
    if len(poses) == 0:
        raise DomainError("bounding_box needs at least one pose")
    positions, _ = poses_to_arrays(poses)
    return Aabb(positions.min(axis=0), positions.max(axis=0))


def extend_box(box, e_max):
    if not e_max >= 0:
        raise DomainError(f"extension distance must be >= 0, got {e_max}")
    return Aabb(box.min - e_max, box.max + e_max)


@dataclass(frozen=True)
class PinholeIntrinsics:
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise DomainError("image size must be at least 1x1")
        if not (self.fx > 0 and self.fy > 0):
            raise DomainError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise DomainError("principal point must lie inside the image")

    @classmethod
    def from_fov(cls, width, height, fov_x_deg):
        """Square pixels, principal point at the image center."""
        f = 0.5 * width / np.tan(np.deg2rad(fov_x_deg) / 2)
        return cls(int(width), int(height), float(f), float(f), width / 2.0, height / 2.0)

    def scaled(self, width, height):
        sx, sy = width / self.width, height / self.height
        return PinholeIntrinsics(int(width), int(height), self.fx * sx, self.fy * sy, self.cx * sx, self.cy * sy)

    def camera_directions(self, px, py):
        """Unit directions in the camera frame for (possibly fractional) pixels."""
        px = np.asarray(px, dtype=np.float64)
        py = np.asarray(py, dtype=np.float64)
        d = np.stack([(px - self.cx) / self.fx, -(py - self.cy) / self.fy, -np.ones_like(px)], axis=-1)
        return d / np.linalg.norm(d, axis=-1, keepdims=True)

    def project(self, points_cam):
        """Camera-frame points to pixel coordinates (inverse of ``camera_directions``)."""
        p = np.asarray(points_cam, dtype=np.float64)
        z = -p[..., 2]
        return np.stack([self.cx + self.fx * p[..., 0] / z, self.cy - self.fy * p[..., 1] / z], axis=-1)


@dataclass(frozen=True, eq=False)
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    t_near: float
    t_far: float

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=np.float64)
        if abs(np.linalg.norm(d) - 1.0) > UNIT_TOL:
            raise DomainError("ray direction must be unit length")
        if not 0 <= self.t_near < self.t_far:
            raise DomainError(f"need 0 <= t_near < t_far, got {self.t_near}, {self.t_far}")
        object.__setattr__(self, "origin", _readonly(self.origin))
        object.__setattr__(self, "direction", _readonly(d))

    def at(self, t):
        return self.origin + np.multiply.outer(t, self.direction)


def pixel_ray(pose, intrinsics, px, py, t_near, t_far):
    """Ray through image coordinates ``(px, py)`` of a camera at ``pose``.

    Pixel ``(i, j)`` covers ``[i, i+1) x [j, j+1)``; pass ``i + 0.5`` for its center.
    """
    if not (0 <= px < intrinsics.width and 0 <= py < intrinsics.height):
        raise DomainError(f"pixel ({px}, {py}) outside {intrinsics.width}x{intrinsics.height} image")
    d_cam = intrinsics.camera_directions(px, py)
    d = pose.rotation_matrix() @ d_cam
    d /= np.linalg.norm(d)
    return Ray(pose.position, d, t_near, t_far)
