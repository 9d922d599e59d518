"""Volume rendering of scene fields.

For samples ``t_1 < ... < t_N`` along a ray::

    C = sum_i T_i (1 - exp(-sigma_i delta_i)) c_i + T_final * background
    T_i = exp(-sum_{j<i} sigma_j delta_j)
    delta_i = t_{i+1} - t_i,   delta_N = t_far - t_N

Coarse samples sit at the midpoints of ``N_c`` equal bins over
``[t_near, t_far]``, or are jittered inside their bins when ``stratified``.
With ``n_fine > 0`` another ``N_f`` samples are drawn from the coarse weight
distribution and the field is re-evaluated on the merged, sorted set.

Randomness is drawn per image, up front, as one ``(H*W, N)`` array in pixel
order, so results do not depend on chunking or on how images are scheduled
across workers.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from lens_forge import kernels
from lens_forge.errors import DomainError, RenderError

_MAX_POINTS_PER_CHUNK = 1 << 20


@dataclass(frozen=True)
class RenderConfig:
    n_coarse: int = 64
    n_fine: int = 0
    t_near: float = None
    t_far: float = None
    stratified: bool = False
    background_color: tuple = (0.0, 0.0, 0.0)
    seed: int = 0

    def __post_init__(self):
        if self.n_coarse < 2:
            raise DomainError("n_coarse must be >= 2")
        if self.n_fine < 0:
            raise DomainError("n_fine must be >= 0")
        if self.t_near is not None and self.t_far is not None and not 0 <= self.t_near < self.t_far:
            raise DomainError(f"need 0 <= t_near < t_far, got {self.t_near}, {self.t_far}")

    def with_box_defaults(self, box):
        """Fill unset near/far planes from the diagonal of ``box``."""
        diag = box.diagonal
        return replace(self,
                       t_near=0.05 * diag if self.t_near is None else self.t_near,
                       t_far=1.5 * diag if self.t_far is None else self.t_far)

    def _bounds(self):
        if self.t_near is None or self.t_far is None:
            raise DomainError("t_near/t_far unset; use RenderConfig.with_box_defaults")
        return float(self.t_near), float(self.t_far)


@dataclass(frozen=True, eq=False)
class Image:
    pixels: np.ndarray  # (height, width, 3), channels in [0, 1]

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]

    def to_uint8(self):
        return np.floor(np.clip(self.pixels, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def coarse_depths(n_rays, n, t_near, t_far, u=None):
    step = (t_far - t_near) / n
    offset = 0.5 if u is None else u
    return t_near + (np.arange(n)[None, :] + offset) * step + np.zeros((n_rays, 1))


def _query(field, points, dirs, appearance):
    sigma, rgb = field.query(points, dirs, appearance)
    bad = ~(np.isfinite(sigma) & np.all(np.isfinite(rgb), axis=1))
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise RenderError(f"non-finite field value at position {points[i].tolist()}")
    return sigma, rgb


def render_rays(field, origins, directions, appearance, config, u_coarse=None, u_fine=None):
    """Render a batch of rays.

    Returns ``(color (R,3), t_final (R,), weights (R,N), t (R,N))``; the last
    two describe the final (merged, when fine sampling) sample set.
    """
    t_near, t_far = config._bounds()
    origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    directions = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    n_rays = len(origins)
    nc, nf = config.n_coarse, config.n_fine
    if config.stratified and u_coarse is None:
        raise DomainError("stratified rendering needs coarse uniforms")
    if nf > 0 and u_fine is None:
        raise DomainError("fine sampling needs fine uniforms")
    background = np.asarray(config.background_color, dtype=np.float64)
    t_far_arr = np.full(n_rays, t_far)

    t = coarse_depths(n_rays, nc, t_near, t_far, u_coarse if config.stratified else None)
    pts = origins[:, None, :] + t[..., None] * directions[:, None, :]
    dirs = np.broadcast_to(directions[:, None, :], pts.shape).reshape(-1, 3)
    sigma, rgb = _query(field, pts.reshape(-1, 3), dirs, appearance)
    color, t_final, weights = kernels.composite(sigma.reshape(n_rays, nc), rgb.reshape(n_rays, nc, 3), t,
                                                t_far_arr, background)
    if nf > 0:
        edges = t_near + np.arange(nc + 1)[None, :] * ((t_far - t_near) / nc) + np.zeros((n_rays, 1))
        fine = kernels.sample_pdf(edges, weights, u_fine)
        t = np.sort(np.concatenate([t, fine], axis=1), axis=1)
        pts = origins[:, None, :] + t[..., None] * directions[:, None, :]
        dirs = np.broadcast_to(directions[:, None, :], pts.shape).reshape(-1, 3)
        sigma, rgb = _query(field, pts.reshape(-1, 3), dirs, appearance)
        n = nc + nf
        color, t_final, weights = kernels.composite(sigma.reshape(n_rays, n), rgb.reshape(n_rays, n, 3), t,
                                                    t_far_arr, background)
    return color, t_final, weights, t


def render_ray(field, ray, appearance, config, rng=None):
    """Render one :class:`~lens_forge.geometry.Ray`; returns ``(rgb, t_final)``.

    The ray's own ``t_near``/``t_far`` override the config.
    """
    config = replace(config, t_near=ray.t_near, t_far=ray.t_far)
    u_c, u_f = _uniforms(rng, config, 1)
    color, t_final, _, _ = render_rays(field, ray.origin[None], ray.direction[None], appearance, config, u_c, u_f)
    return color[0], float(t_final[0])


def importance_resample(coarse_ts, coarse_weights, n_fine, rng, t_near=None, t_far=None):
    """Draw ``n_fine`` depths from the piecewise-constant weight density.

    Sample ``i`` owns the interval between the midpoints to its neighbours;
    the outer edges are ``t_near``/``t_far`` when given. Returns the sorted
    union of coarse and fine depths. All-zero weights sample uniformly.
    """
    ts = np.asarray(coarse_ts, dtype=np.float64)
    w = np.asarray(coarse_weights, dtype=np.float64)
    if ts.shape != w.shape or ts.ndim != 1 or len(ts) < 1:
        raise DomainError("coarse_ts and coarse_weights must be 1-D and of equal length")
    if np.any(w < 0):
        raise DomainError("weights must be non-negative")
    edges = _bin_edges(ts, t_near, t_far)
    u = rng.random((1, n_fine))
    fine = kernels.sample_pdf(edges[None], w[None], u)[0]
    return np.sort(np.concatenate([ts, fine]))


def _bin_edges(ts, t_near, t_far):
    if len(ts) == 1:
        lo = ts[0] if t_near is None else t_near
        hi = ts[0] if t_far is None else t_far
        return np.array([lo, hi])
    mids = 0.5 * (ts[1:] + ts[:-1])
    lo = ts[0] - (mids[0] - ts[0]) if t_near is None else t_near
    hi = ts[-1] + (ts[-1] - mids[-1]) if t_far is None else t_far
    return np.concatenate([[lo], mids, [hi]])


def _uniforms(rng, config, n_rays):
    if rng is None:
        rng = np.random.default_rng(config.seed)
    u_c = rng.random((n_rays, config.n_coarse)) if config.stratified else None
    u_f = rng.random((n_rays, config.n_fine)) if config.n_fine > 0 else None
    return u_c, u_f


def image_rays(pose, intrinsics):
    """World-space origins and unit directions for every pixel center, row-major."""
    j, i = np.meshgrid(np.arange(intrinsics.height), np.arange(intrinsics.width), indexing="ij")
    d_cam = intrinsics.camera_directions(i.ravel() + 0.5, j.ravel() + 0.5)
    d = d_cam @ pose.rotation_matrix().T
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return np.broadcast_to(pose.position, d.shape), d


def render_image(field, pose, intrinsics, appearance, config, rng=None):
    """Render a full image. ``rng`` defaults to a generator seeded with ``config.seed``."""
    origins, dirs = image_rays(pose, intrinsics)
    n_rays = len(dirs)
    u_c, u_f = _uniforms(rng, config, n_rays)
    n_per_ray = config.n_coarse + config.n_fine
    chunk = max(1, _MAX_POINTS_PER_CHUNK // n_per_ray)
    out = np.empty((n_rays, 3))
    for s in range(0, n_rays, chunk):
        e = min(n_rays, s + chunk)
        try:
            color, _, _, _ = render_rays(field, origins[s:e], dirs[s:e], appearance, config,
                                         None if u_c is None else u_c[s:e], None if u_f is None else u_f[s:e])
        except RenderError as exc:
            raise RenderError(f"pixel block {s}-{e - 1}: {exc}") from exc
        out[s:e] = color
    return Image(np.clip(out, 0.0, 1.0).reshape(intrinsics.height, intrinsics.width, 3))


def image_seed(seed, index):
    """Seed material for image ``index`` of a batch rendered with ``seed``."""
    return [int(seed) & 0xFFFFFFFFFFFFFFFF, int(index)]


def _render_one(args):
    field, pose, appearance, intrinsics, config, key = args
    return render_image(field, pose, intrinsics, appearance, config, np.random.default_rng(key))


def render_batch(field, items, intrinsics, config, parallelism=1, progress=None):
    """Render ``items`` = ``[(pose, appearance), ...]`` preserving order.

    Image ``k`` uses a random stream keyed by ``(config.seed, k)`` (or by an
    explicit third tuple element), so output is identical for any
    ``parallelism``. ``progress(k)`` is called as each image finishes.
    """
    jobs = []
    for k, item in enumerate(items):
        pose, appearance = item[0], item[1]
        key = item[2] if len(item) > 2 else image_seed(config.seed, k)
        jobs.append((field, pose, appearance, intrinsics, config, key))
    if not jobs:
        return []
    images = [None] * len(jobs)
    if parallelism <= 1:
        for k, job in enumerate(jobs):
            images[k] = _guarded(k, job)
            if progress:
                progress(k)
        return images
    with ProcessPoolExecutor(max_workers=int(parallelism)) as pool:
        for k, img in enumerate(pool.map(_guarded_star, range(len(jobs)), jobs, chunksize=1)):
            images[k] = img
            if progress:
                progress(k)
    return images


def _guarded(k, job):
    try:
        return _render_one(job)
    except RenderError as exc:
        raise RenderError(f"image {k}: {exc}") from exc


def _guarded_star(k, job):
    return _guarded(k, job)
