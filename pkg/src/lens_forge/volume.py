"""Density volume: grid points of the scene whose density exceeds a threshold."""

from dataclasses import dataclass

import numpy as np

from lens_forge.errors import DatasetError, DomainError
from lens_forge.geometry import Aabb, bounding_box, extend_box

DEFAULT_RV = 128
DEFAULT_T_SIGMA = 20.0

_CHUNK = 1 << 20


@dataclass(frozen=True)
class VolumeConfig:
    r_v: int = DEFAULT_RV
    t_sigma: float = DEFAULT_T_SIGMA
    e_max: float = 1.0

    def __post_init__(self):
        if int(self.r_v) != self.r_v or self.r_v < 2:
            raise DomainError(f"r_v must be an integer >= 2, got {self.r_v}")
        if not self.t_sigma >= 0:
            raise DomainError(f"t_sigma must be >= 0, got {self.t_sigma}")
        if not self.e_max >= 0:
            raise DomainError(f"e_max must be >= 0, got {self.e_max}")


def grid_axes(box, resolution, axes=(0, 1, 2)):
    """Cell-center coordinates along each requested axis, and the spacing.

    The spacing is the smallest nonzero edge (among ``axes``) divided by
    ``resolution``. An axis of zero length gets a single layer at its midpoint.
    """
    if int(resolution) != resolution or resolution < 1:
        raise DomainError(f"resolution must be a positive integer, got {resolution}")
    edges = box.edges
    nonzero = [edges[a] for a in axes if edges[a] > 0]
    if not nonzero:
        raise DomainError("grid box is degenerate on every axis")
    spacing = min(nonzero) / resolution
    coords = []
    for a in axes:
        if edges[a] > 0:
            count = int(np.floor(edges[a] / spacing + 1e-9))
            coords.append(box.min[a] + (np.arange(count) + 0.5) * spacing)
        else:
            coords.append(np.array([box.min[a]]))
    return coords, spacing


def _mesh(coords):
    return np.stack(np.meshgrid(*coords, indexing="ij"), axis=-1).reshape(-1, len(coords))


def build_grid(box, resolution_param):
    """Regular grid of cell centers over ``box`` in C order over (ix, iy, iz)."""
    coords, _ = grid_axes(box, resolution_param)
    return _mesh(coords)


def grid_spacing(box, resolution_param):
    return grid_axes(box, resolution_param)[1]


@dataclass(frozen=True, eq=False)
class OccupiedPointSet:
    points: np.ndarray
    spacing: float
    source_box: Aabb
    t_sigma: float
    grid_count: int = 0

    @property
    def count(self):
        return len(self.points)


def extract_density_volume(field, training_poses, config):
    """Grid points over the extended pose bounding box with density > ``t_sigma``."""
    if len(training_poses) == 0:
        raise DomainError("need at least one training pose")
    box = extend_box(bounding_box(training_poses), config.e_max)
    return extract_from_box(field, box, config.r_v, config.t_sigma)


def extract_from_box(field, box, r_v, t_sigma):
    coords, spacing = grid_axes(box, r_v)
    nx, ny, nz = (len(c) for c in coords)
    plane = _mesh(coords[1:])
    rows_per_chunk = max(1, _CHUNK // max(1, len(plane)))
    found = []
    for i0 in range(0, nx, rows_per_chunk):
        xs = coords[0][i0:i0 + rows_per_chunk]
        pts = np.empty((len(xs) * len(plane), 3))
        pts[:, 0] = np.repeat(xs, len(plane))
        pts[:, 1:] = np.tile(plane, (len(xs), 1))
        sigma = field.density(pts)
        found.append(pts[sigma > t_sigma])
    points = np.concatenate(found) if found else np.zeros((0, 3))
    return OccupiedPointSet(points, spacing, box, float(t_sigma), nx * ny * nz)


# ---------------------------------------------------------------------------
# text export: header line then "x y z" per line


def save_occupied(occ, path):
    b = occ.source_box
    box_s = " ".join(repr(float(v)) for v in (*b.min, *b.max))
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# spacing={float(occ.spacing)!r} box={box_s} t_sigma={float(occ.t_sigma)!r} grid_count={occ.grid_count}\n")
        for p in occ.points:
            f.write(f"{float(p[0])!r} {float(p[1])!r} {float(p[2])!r}\n")


def load_occupied(path):
    with open(path, encoding="utf-8") as f:
        header = f.readline()
        if not header.startswith("# spacing="):
            raise DatasetError(f"{path}: missing occupied-point header")
        try:
            body = header[2:].strip()
            spacing = float(body.split("spacing=")[1].split()[0])
            box_vals = [float(v) for v in body.split("box=")[1].split("t_sigma=")[0].split()]
            t_sigma = float(body.split("t_sigma=")[1].split()[0])
            grid_count = int(body.split("grid_count=")[1].split()[0]) if "grid_count=" in body else 0
        except (IndexError, ValueError) as exc:
            raise DatasetError(f"{path}: malformed header: {exc}") from exc
        rows = []
        for lineno, line in enumerate(f, start=2):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise DatasetError(f"{path}:{lineno}: expected 'x y z'")
            try:
                rows.append([float(v) for v in parts])
            except ValueError as exc:
                raise DatasetError(f"{path}:{lineno}: {exc}") from exc
    points = np.array(rows, dtype=np.float64).reshape(-1, 3)
    return OccupiedPointSet(points, spacing, Aabb(box_vals[:3], box_vals[3:]), t_sigma, grid_count)
