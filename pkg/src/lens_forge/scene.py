"""Queryable volumetric scenes: position/direction/appearance -> density, color.

Two implementations are provided:

``AnalyticScene``
    union of boxes, spheres and infinite plane slabs, each with a constant
    density and color. Overlaps resolve to the densest primitive.
``VoxelGridScene``
    trilinear interpolation over a regular lattice of density and color
    nodes, e.g. exported from an external radiance-field trainer.

Density never depends on the view direction or the appearance vector.
Appearance acts on color only, as a per-channel affine map::

    gain = 1 + a[0:3],  bias = a[3:6],  color = clip(gain * base + bias, 0, 1)

so the zero vector is the identity. Coefficients beyond the sixth are carried
but unused.

Scene file format (JSON)::

    {
      "background_color": [r, g, b],
      "appearance_dim": 8,
      "t_sigma": 20,                      # optional recommended threshold
      "appearances": [[...], ...],        # optional per-image appearance bank
      "primitives": [
        {"shape": "box", "center": [..], "size": [sx, sy, sz],
         "rotation": [qx, qy, qz, qw], "sigma": 100, "color": [r, g, b]},
        {"shape": "sphere", "center": [..], "radius": r, ...},
        {"shape": "plane-slab", "center": [..], "normal": [..], "thickness": h, ...}
      ]
    }

or, instead of ``primitives``::

    "voxel_grid": {"resolution": [nx, ny, nz],
                   "bounds": {"min": [..], "max": [..]},
                   "path": "grid.bin"}

``grid.bin`` holds little-endian float32: ``nx*ny*nz`` densities followed by
``nx*ny*nz`` interleaved RGB triples, both in C order over ``(ix, iy, iz)``
(z fastest). Relative paths resolve against the scene file's directory.
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from lens_forge import kernels
from lens_forge.errors import DomainError
from lens_forge.geometry import Aabb, quat_to_matrix, unit_quaternion

DEFAULT_APPEARANCE_DIM = 8

_SHAPES = {"box": kernels.SHAPE_BOX, "sphere": kernels.SHAPE_SPHERE, "plane-slab": kernels.SHAPE_SLAB}


def zero_appearance(dim=DEFAULT_APPEARANCE_DIM):
    return np.zeros(dim)


def appearance_affine(appearance):
    """``(gain, bias)`` per RGB channel for an appearance vector (None = identity)."""
    if appearance is None:
        return np.ones(3), np.zeros(3)
    a = np.zeros(6)
    k = min(6, len(appearance))
    a[:k] = appearance[:k]
    return 1.0 + a[:3], a[3:6]


@dataclass(frozen=True)
class FieldSample:
    sigma: float
    color: tuple


class SceneField:
    """Base class. Subclasses implement ``_evaluate(points) -> (sigma, base_rgb)``."""

    appearance_dim = DEFAULT_APPEARANCE_DIM
    bounds_hint = None

    def _evaluate(self, points):
        raise NotImplementedError

    def _check_appearance(self, appearance):
        if appearance is None:
            return None
        a = np.asarray(appearance, dtype=np.float64)
        if a.shape != (self.appearance_dim,):
            raise DomainError(f"appearance has length {a.size}, scene expects {self.appearance_dim}")
        if not np.all(np.isfinite(a)):
            raise DomainError("appearance coefficients must be finite")
        return a

    def query(self, positions, directions=None, appearance=None):
        """Batched query: ``(n, 3)`` positions -> ``sigma (n,)``, ``rgb (n, 3)``.

        ``directions`` is accepted for interface completeness; these fields
        have no view-dependent radiance.
        """
        a = self._check_appearance(appearance)
        positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
        sigma, rgb = self._evaluate(positions)
        gain, bias = appearance_affine(a)
        return np.maximum(sigma, 0.0), np.clip(rgb * gain + bias, 0.0, 1.0)

    def density(self, positions):
        positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
        sigma, _ = self._evaluate(positions)
        return np.maximum(sigma, 0.0)

    def density_only(self, position):
        return float(self.density(position)[0])


def query_field(field, position, direction, appearance=None):
    """Single-point query returning a :class:`FieldSample`."""
    d = np.asarray(direction, dtype=np.float64)
    if abs(np.linalg.norm(d) - 1.0) > 1e-9:
        raise DomainError("query direction must be unit length")
    sigma, rgb = field.query(np.asarray(position, dtype=np.float64)[None], d[None], appearance)
    return FieldSample(float(sigma[0]), tuple(float(c) for c in rgb[0]))


@dataclass(frozen=True)
class Primitive:
    shape: str
    center: tuple
    sigma: float
    color: tuple
    size: tuple = None          # box full extents
    radius: float = None        # sphere
    normal: tuple = None        # plane-slab
    thickness: float = None     # plane-slab
    rotation: tuple = (0.0, 0.0, 0.0, 1.0)  # box orientation, xyzw

    def __post_init__(self):
        if self.shape not in _SHAPES:
            raise DomainError(f"unknown primitive shape {self.shape!r}")
        if not self.sigma >= 0:
            raise DomainError("primitive sigma must be >= 0")
        if self.shape == "box" and (self.size is None or min(self.size) < 0):
            raise DomainError("box needs a non-negative size")
        if self.shape == "sphere" and (self.radius is None or self.radius < 0):
            raise DomainError("sphere needs a non-negative radius")
        if self.shape == "plane-slab" and (self.normal is None or self.thickness is None or self.thickness < 0):
            raise DomainError("plane-slab needs a normal and a non-negative thickness")

    def encode(self):
        """Kernel encoding: (kind, center, world-to-local axes, extents)."""
        axes = np.eye(3)
        extents = np.zeros(3)
        if self.shape == "box":
            axes = quat_to_matrix(unit_quaternion(self.rotation)).T
            extents = 0.5 * np.asarray(self.size, dtype=np.float64)
        elif self.shape == "sphere":
            extents[0] = self.radius
        else:
            n = np.asarray(self.normal, dtype=np.float64)
            axes = np.zeros((3, 3))
            axes[0] = n / np.linalg.norm(n)
            extents[0] = 0.5 * self.thickness
        return _SHAPES[self.shape], np.asarray(self.center, dtype=np.float64), axes, extents

    def to_dict(self):
        d = {"shape": self.shape, "center": list(self.center), "sigma": self.sigma, "color": list(self.color)}
        if self.shape == "box":
            d["size"] = list(self.size)
            if tuple(self.rotation) != (0.0, 0.0, 0.0, 1.0):
                d["rotation"] = list(self.rotation)
        elif self.shape == "sphere":
            d["radius"] = self.radius
        else:
            d["normal"] = list(self.normal)
            d["thickness"] = self.thickness
        return d


def box(center, size, sigma, color, rotation=(0.0, 0.0, 0.0, 1.0)):
    return Primitive("box", tuple(center), float(sigma), tuple(color), size=tuple(size), rotation=tuple(rotation))


def sphere(center, radius, sigma, color):
    return Primitive("sphere", tuple(center), float(sigma), tuple(color), radius=float(radius))


def slab(center, normal, thickness, sigma, color):
    return Primitive("plane-slab", tuple(center), float(sigma), tuple(color), normal=tuple(normal),
                     thickness=float(thickness))


class AnalyticScene(SceneField):
    def __init__(self, primitives, background_color=(0.0, 0.0, 0.0), appearance_dim=DEFAULT_APPEARANCE_DIM,
                 appearances=None, t_sigma=None, bounds_hint=None):
        self.primitives = tuple(primitives)
        self.background_color = np.asarray(background_color, dtype=np.float64)
        self.appearance_dim = int(appearance_dim)
        self.appearances = [] if appearances is None else [np.asarray(a, dtype=np.float64) for a in appearances]
        for a in self.appearances:
            self._check_appearance(a)
        self.t_sigma = t_sigma
        self.bounds_hint = bounds_hint
        enc = [p.encode() for p in self.primitives]
        self._kinds = np.array([e[0] for e in enc], dtype=np.int64)
        self._centers = np.array([e[1] for e in enc]).reshape(-1, 3)
        self._axes = np.array([e[2] for e in enc]).reshape(-1, 3, 3)
        self._extents = np.array([e[3] for e in enc]).reshape(-1, 3)
        self._sigmas = np.array([p.sigma for p in self.primitives], dtype=np.float64)
        self._colors = np.array([p.color for p in self.primitives], dtype=np.float64).reshape(-1, 3)

    def _evaluate(self, points):
        return kernels.analytic_field(points, self._kinds, self._centers, self._axes, self._extents,
                                      self._sigmas, self._colors, self.background_color)

    def to_dict(self):
        d = {"background_color": self.background_color.tolist(), "appearance_dim": self.appearance_dim}
        if self.t_sigma is not None:
            d["t_sigma"] = self.t_sigma
        if self.appearances:
            d["appearances"] = [a.tolist() for a in self.appearances]
        d["primitives"] = [p.to_dict() for p in self.primitives]
        return d


class VoxelGridScene(SceneField):
    """Lattice nodes at ``min + i * (max - min) / (n - 1)`` per axis; zero density outside."""

    def __init__(self, bounds, sigma_grid, color_grid, background_color=(0.0, 0.0, 0.0),
                 appearance_dim=DEFAULT_APPEARANCE_DIM, appearances=None, t_sigma=None):
        self.sigma_grid = np.ascontiguousarray(sigma_grid, dtype=np.float64)
        self.color_grid = np.ascontiguousarray(color_grid, dtype=np.float64)
        if self.sigma_grid.ndim != 3 or self.color_grid.shape != self.sigma_grid.shape + (3,):
            raise DomainError("voxel grid needs sigma (nx,ny,nz) and color (nx,ny,nz,3)")
        self.bounds = bounds
        self.bounds_hint = bounds
        self.background_color = np.asarray(background_color, dtype=np.float64)
        self.appearance_dim = int(appearance_dim)
        self.appearances = [] if appearances is None else [np.asarray(a, dtype=np.float64) for a in appearances]
        self.t_sigma = t_sigma

    @property
    def resolution(self):
        return self.sigma_grid.shape

    def node_positions(self):
        axes = [np.linspace(self.bounds.min[a], self.bounds.max[a], n) if n > 1 else np.array([self.bounds.min[a]])
                for a, n in enumerate(self.resolution)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def _evaluate(self, points):
        return kernels.trilinear(points, self.bounds.min, self.bounds.max, self.sigma_grid, self.color_grid,
                                 self.background_color)


# ---------------------------------------------------------------------------
# appearance interpolation


def interpolate_appearance(appearances, rng):
    """Random convex combination of two distinct entries of an appearance bank."""
    if len(appearances) == 0:
        raise DomainError("need at least one appearance vector")
    bank = [np.asarray(a, dtype=np.float64) for a in appearances]
    if any(a.shape != bank[0].shape for a in bank):
        raise DomainError("appearance vectors differ in length")
    if len(bank) == 1:
        return bank[0].copy()
    i, j = rng.choice(len(bank), size=2, replace=False)
    w = rng.uniform(0.0, 1.0)
    return w * bank[i] + (1.0 - w) * bank[j]


# ---------------------------------------------------------------------------
# scene files


def _parse_primitive(d, where):
    try:
        shape = d["shape"]
        common = dict(center=tuple(float(v) for v in d["center"]), sigma=float(d["sigma"]),
                      color=tuple(float(v) for v in d.get("color", (1.0, 1.0, 1.0))))
        if shape == "box":
            return box(size=[float(v) for v in d["size"]], rotation=d.get("rotation", (0.0, 0.0, 0.0, 1.0)), **common)
        if shape == "sphere":
            return sphere(radius=float(d["radius"]), **common)
        if shape == "plane-slab":
            return slab(normal=[float(v) for v in d["normal"]], thickness=float(d["thickness"]), **common)
    except (KeyError, TypeError, ValueError) as exc:
        raise DomainError(f"{where}: bad primitive {d!r}: {exc}") from exc
    raise DomainError(f"{where}: unknown primitive shape {shape!r}")


def scene_from_dict(d, base_dir="."):
    background = d.get("background_color", [0.0, 0.0, 0.0])
    dim = int(d.get("appearance_dim", DEFAULT_APPEARANCE_DIM))
    appearances = d.get("appearances")
    t_sigma = d.get("t_sigma")
    if "voxel_grid" in d:
        vg = d["voxel_grid"]
        res = tuple(int(v) for v in vg["resolution"])
        bounds = Aabb(vg["bounds"]["min"], vg["bounds"]["max"])
        path = vg["path"]
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        raw = np.fromfile(path, dtype="<f4").astype(np.float64)
        m = int(np.prod(res))
        if raw.size != 4 * m:
            raise DomainError(f"voxel file {path} has {raw.size} floats, expected {4 * m}")
        return VoxelGridScene(bounds, raw[:m].reshape(res), raw[m:].reshape(res + (3,)), background, dim,
                              appearances, t_sigma)
    prims = [_parse_primitive(p, f"primitives[{i}]") for i, p in enumerate(d.get("primitives", []))]
    return AnalyticScene(prims, background, dim, appearances, t_sigma)


def load_scene(path):
    with open(path, encoding="utf-8") as f:
        try:
            d = json.load(f)
        except json.JSONDecodeError as exc:
            raise DomainError(f"{path}: invalid JSON: {exc}") from exc
    return scene_from_dict(d, os.path.dirname(os.path.abspath(path)))


def save_scene(scene, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(scene.to_dict(), f, indent=2)
        f.write("\n")


def save_voxel_grid(scene, scene_path, grid_filename="grid.bin"):
    """Write a voxel scene as JSON plus its float32 binary payload."""
    base = os.path.dirname(os.path.abspath(scene_path))
    payload = np.concatenate([scene.sigma_grid.ravel(), scene.color_grid.ravel()]).astype("<f4")
    payload.tofile(os.path.join(base, grid_filename))
    d = {
        "background_color": scene.background_color.tolist(),
        "appearance_dim": scene.appearance_dim,
        "voxel_grid": {
            "resolution": list(scene.resolution),
            "bounds": {"min": scene.bounds.min.tolist(), "max": scene.bounds.max.tolist()},
            "path": grid_filename,
        },
    }
    if scene.t_sigma is not None:
        d["t_sigma"] = scene.t_sigma
    if scene.appearances:
        d["appearances"] = [a.tolist() for a in scene.appearances]
    with open(scene_path, "w", encoding="utf-8") as f:
        json.dump(d, f, indent=2)
        f.write("\n")
