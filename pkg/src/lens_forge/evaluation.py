"""Desk-scale evaluation: pose metrics, coverage, retrieval localization, ablations.

The pose regressor is replaced by nearest-image retrieval, so the harness
measures how the *distribution* of database poses affects localization, not
how a network learns from it.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from lens_forge.errors import DomainError, PlacementError
from lens_forge.geometry import (
    Pose,
    bounding_box,
    extend_box,
    poses_to_arrays,
    rotation_angle_between,
)
from lens_forge.placement import PLANAR, assign_orientations, place_cameras
from lens_forge.render import render_batch
from lens_forge.scene import interpolate_appearance
from lens_forge.spatial import KDTree
from lens_forge.volume import extract_from_box

DEFAULT_DOWNSAMPLE = 8
REPORT_COLUMNS = ("ratio", "med_tr_m", "med_rot_deg", "rel_impr_tr", "rel_impr_rot")


def pose_errors(predicted, truth):
    """``(translation m, rotation deg)`` between two poses."""
    t = float(np.linalg.norm(predicted.position - truth.position))
    r = float(rotation_angle_between(predicted.orientation, truth.orientation))
    return t, r


@dataclass(frozen=True, eq=False)
class LocalizationResult:
    predicted: list
    ground_truth: list
    translation_errors: np.ndarray
    rotation_errors: np.ndarray

    @property
    def median_translation_error(self):
        return float(np.median(self.translation_errors))

    @property
    def median_rotation_error(self):
        return float(np.median(self.rotation_errors))


def localization_result(predicted, ground_truth):
    if len(predicted) != len(ground_truth) or not predicted:
        raise DomainError("need equally many, non-zero predicted and ground-truth poses")
    errs = np.array([pose_errors(p, g) for p, g in zip(predicted, ground_truth)])
    return LocalizationResult(list(predicted), list(ground_truth), errs[:, 0], errs[:, 1])


def coverage_stats(train_poses, query_poses):
    """Median distance from each query to its nearest training position, and
    median rotation angle to that same neighbour."""
    if not train_poses or not query_poses:
        raise DomainError("coverage_stats needs non-empty training and query sets")
    tp, tq = poses_to_arrays(train_poses)
    qp, qq = poses_to_arrays(query_poses)
    dist, idx = KDTree(tp).query(qp)
    rot = rotation_angle_between(tq[idx], qq)
    return {"median_nn_translation": float(np.median(dist)), "median_nn_rotation": float(np.median(rot))}


# ---------------------------------------------------------------------------
# retrieval


def _pixels(image):
    return np.asarray(getattr(image, "pixels", image), dtype=np.float64)


def box_downsample(pixels, factor):
    """Mean over ``factor x factor`` blocks; trailing rows/columns that do not fill a block are dropped."""
    if factor < 1:
        raise DomainError("downsample factor must be >= 1")
    h, w, c = pixels.shape
    hh, ww = h // factor, w // factor
    if hh == 0 or ww == 0:
        raise DomainError(f"image {w}x{h} smaller than downsample factor {factor}")
    return pixels[:hh * factor, :ww * factor].reshape(hh, factor, ww, factor, c).mean(axis=(1, 3))


class RetrievalIndex:
    """Downsampled database descriptors; query returns the lowest-MSE entry (lowest index on ties)."""

    def __init__(self, images, poses, downsample=DEFAULT_DOWNSAMPLE):
        if len(images) == 0 or len(images) != len(poses):
            raise DomainError("retrieval database must be non-empty with one pose per image")
        shapes = {_pixels(im).shape for im in images}
        if len(shapes) != 1:
            raise DomainError(f"database images differ in size: {sorted(shapes)}")
        self.shape = shapes.pop()
        self.downsample = downsample
        self.poses = list(poses)
        self.features = np.stack([box_downsample(_pixels(im), downsample).ravel() for im in images])

    def extend(self, images, poses):
        if len(images) == 0:
            return self
        other = RetrievalIndex(images, poses, self.downsample)
        if other.shape != self.shape:
            raise DomainError("image dimension mismatch")
        out = RetrievalIndex.__new__(RetrievalIndex)
        out.shape, out.downsample = self.shape, self.downsample
        out.poses = self.poses + other.poses
        out.features = np.concatenate([self.features, other.features])
        return out

    def nearest(self, query_images):
        q = np.stack([self._feature(im) for im in query_images])
        # explicit squared differences keep ties exact (no expansion rounding)
        out = np.empty(len(q), dtype=np.int64)
        for s in range(0, len(q), 64):
            d = ((q[s:s + 64, None, :] - self.features[None, :, :]) ** 2).mean(axis=2)
            out[s:s + 64] = np.argmin(d, axis=1)
        return out

    def localize(self, query_images):
        return [self.poses[i] for i in self.nearest(query_images)]

    def _feature(self, image):
        px = _pixels(image)
        if px.shape != self.shape:
            raise DomainError(f"query image shape {px.shape} differs from database {self.shape}")
        return box_downsample(px, self.downsample).ravel()


def retrieval_localize(query_image, database, downsample=DEFAULT_DOWNSAMPLE):
    """Pose of the database ``(image, pose)`` pair most similar to ``query_image``."""
    if not database:
        raise DomainError("empty retrieval database")
    images, poses = zip(*database)
    return RetrievalIndex(images, poses, downsample).localize([query_image])[0]


# ---------------------------------------------------------------------------
# test poses


def uniform_test_poses(training_poses, count, d_max, d_sigma, e_max, theta, mode, seed,
                       occupied_points=None, plane_height=None):
    """Uniformly random poses in the region a placement run may reach.

    Positions are drawn uniformly in the extended pose box (on the placement
    plane in planar mode) and kept when within ``d_max`` of a training
    camera and at least ``d_sigma`` from every occupied point. Orientations
    follow the same nearest-camera-plus-perturbation rule as placement.
    """
    rng = np.random.default_rng(seed)
    box = extend_box(bounding_box(training_poses), e_max)
    tp, _ = poses_to_arrays(training_poses)
    cam_index = KDTree(tp)
    occ_index = KDTree(occupied_points) if occupied_points is not None and len(occupied_points) else None
    if mode == PLANAR and plane_height is None:
        plane_height = float(tp[:, 2].mean())
    found = []
    n_found = 0
    for _ in range(1000):
        p = rng.uniform(box.min, box.max, size=(max(64, 4 * count), 3))
        if mode == PLANAR:
            p[:, 2] = plane_height
        keep = cam_index.nearest_distance(p) <= d_max
        if occ_index is not None:
            keep &= occ_index.nearest_distance(p) >= d_sigma
        found.append(p[keep])
        n_found += int(keep.sum())
        if n_found >= count:
            break
    else:
        raise PlacementError("feasible region too small to draw test poses")
    positions = np.concatenate(found)[:count]
    quats = assign_orientations(positions, training_poses, theta, rng, index=cam_index)
    return [Pose(p, q) for p, q in zip(positions, quats)]


# ---------------------------------------------------------------------------
# ablation


@dataclass(frozen=True)
class AblationRow:
    ratio: float
    median_translation: float
    median_rotation: float
    relative_improvement_translation: float
    relative_improvement_rotation: float
    n_synthetic: int = 0
    violations: int = 0  # synthetic cameras closer than d_sigma to occupied points


@dataclass
class AblationSetup:
    """Everything :func:`run_ablation` needs besides the scene and poses."""

    intrinsics: object
    render_config: object
    placement_config: object
    volume_r_v: int = 128
    volume_t_sigma: float = 20.0
    appearance: str = "random"   # "random" interpolation or "fixed" (zero vector)
    downsample: int = DEFAULT_DOWNSAMPLE
    jobs: int = 1
    seed: int = 0
    counters: dict = field(default_factory=lambda: {"place": 0, "render_synthetic": 0})


def _bank_appearance(scene, k):
    bank = getattr(scene, "appearances", None)
    return bank[k % len(bank)] if bank else None


def prepare_real(scene, real_poses, test_poses, setup):
    """Render the stand-ins for real photographs: training and test images.

    Each image gets one entry of the scene's appearance bank.
    """
    cfg = setup.render_config
    real_items = [(p, _bank_appearance(scene, k), [setup.seed, 1, k]) for k, p in enumerate(real_poses)]
    test_items = [(p, _bank_appearance(scene, k + len(real_poses)), [setup.seed, 2, k]) for k, p in enumerate(test_poses)]
    real_images = render_batch(scene, real_items, setup.intrinsics, cfg, setup.jobs)
    test_images = render_batch(scene, test_items, setup.intrinsics, cfg, setup.jobs)
    return real_images, test_images


def synthesize(scene, real_poses, occupied_points, n, setup):
    """Place ``n`` virtual cameras and render them; returns (poses, images)."""
    setup.counters["place"] += 1
    cams = place_cameras(real_poses, occupied_points, replace(setup.placement_config, n=n))
    rng = np.random.default_rng([setup.seed, 3, n])
    bank = getattr(scene, "appearances", None)
    items = []
    for k, p in enumerate(cams.poses):
        if setup.appearance == "random" and bank:
            a = interpolate_appearance(bank, rng)
        else:
            a = None
        items.append((p, a, [setup.seed, 4, n, k]))
    setup.counters["render_synthetic"] += 1
    images = render_batch(scene, items, setup.intrinsics, setup.render_config, setup.jobs)
    return cams.poses, images


def occupied_for(scene, real_poses, setup):
    box = extend_box(bounding_box(real_poses), setup.placement_config.e_max)
    return extract_from_box(scene, box, setup.volume_r_v, setup.volume_t_sigma).points


def run_ablation(scene, real_poses, test_poses, ratios, setup, real_images=None, test_images=None,
                 occupied_points=None):
    """Localization error as a function of synthetic/real ratio.

    For each ratio ``rho`` places ``ceil(rho * |real|)`` cameras, renders them,
    adds them to the real database and localizes every test image.
    ``rho = 0`` uses the real database only and never places or renders.
    """
    ratios = [float(r) for r in ratios]
    if 0.0 not in ratios:
        raise DomainError("ratios must include 0 (the baseline)")
    if any(r < 0 for r in ratios):
        raise DomainError("ratios must be non-negative")
    if real_images is None or test_images is None:
        real_images, test_images = prepare_real(scene, real_poses, test_poses, setup)
    base_index = RetrievalIndex(real_images, real_poses, setup.downsample)
    if occupied_points is None and any(r > 0 for r in ratios) and setup.placement_config.volume_pruning:
        occupied_points = occupied_for(scene, real_poses, setup)
    occ_index = KDTree(occupied_points) if occupied_points is not None and len(occupied_points) else None

    results = {}
    for rho in sorted(set(ratios)):
        index = base_index
        n_syn = 0
        violations = 0
        if rho > 0:
            n_syn = math.ceil(rho * len(real_poses))
            try:
                poses, images = synthesize(scene, real_poses, occupied_points, n_syn, setup)
            except PlacementError as exc:
                raise PlacementError(f"ratio {rho}: {exc}", exc.resolution, exc.feasible) from exc
            index = base_index.extend(images, poses)
            if occ_index is not None:
                p, _ = poses_to_arrays(poses)
                violations = int((occ_index.nearest_distance(p) < setup.placement_config.d_sigma).sum())
        res = localization_result(index.localize(test_images), test_poses)
        results[rho] = (res.median_translation_error, res.median_rotation_error, n_syn, violations)

    t0, r0 = results[0.0][0], results[0.0][1]
    rows = []
    for rho in ratios:
        t, r, n_syn, v = results[rho]
        rows.append(AblationRow(rho, t, r, _rel(t, t0), _rel(r, r0), n_syn, v))
    return rows


def _rel(err, base):
    if base == 0:
        return 0.0 if err == 0 else -math.inf
    return 1.0 - err / base


def check_ablation(rows, max_ratio_fraction=0.6):
    """Pass/fail checks on a ratio ladder: non-increasing translation error and
    a final/baseline ratio of at most ``max_ratio_fraction``."""
    ordered = sorted(rows, key=lambda r: r.ratio)
    med = [r.median_translation for r in ordered]
    checks = [("non_increasing_translation", all(b <= a for a, b in zip(med, med[1:])),
               " -> ".join(f"{m:.4f}" for m in med))]
    if len(ordered) > 1 and med[0] > 0:
        frac = med[-1] / med[0]
        checks.append((f"ratio_{ordered[-1].ratio:g}_vs_baseline", frac <= max_ratio_fraction,
                       f"{frac:.3f} <= {max_ratio_fraction}"))
    return checks


# ---------------------------------------------------------------------------
# report


def emit_report(rows, path, long_path=None):
    """TSV with header ``ratio med_tr_m med_rot_deg rel_impr_tr rel_impr_rot``
    plus a long-format ``ratio metric value`` companion (``<path>.long.tsv``)."""
    if not rows:
        raise DomainError("no ablation rows to report")
    lines = ["\t".join(REPORT_COLUMNS)]
    long_lines = ["ratio\tmetric\tvalue"]
    for r in rows:
        vals = (r.ratio, r.median_translation, r.median_rotation,
                r.relative_improvement_translation, r.relative_improvement_rotation)
        lines.append("\t".join(repr(float(v)) for v in vals))
        for name, v in zip(REPORT_COLUMNS[1:], vals[1:]):
            long_lines.append(f"{float(r.ratio)!r}\t{name}\t{float(v)!r}")
    if long_path is None:
        long_path = (path[:-4] if path.endswith(".tsv") else path) + ".long.tsv"
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    with open(long_path, "w", encoding="utf-8") as f:
        f.write("\n".join(long_lines) + "\n")
    return path, long_path


def read_report(path):
    with open(path, encoding="utf-8") as f:
        header = f.readline().rstrip("\n").split("\t")
        if tuple(header) != REPORT_COLUMNS:
            raise DomainError(f"{path}: unexpected header {header}")
        rows = []
        for line in f:
            if line.strip():
                v = [float(x) for x in line.rstrip("\n").split("\t")]
                rows.append(AblationRow(*v))
    return rows
