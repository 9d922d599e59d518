"""Posed image datasets: native pose files, convention adapters, merging, sampling.

Native pose file (UTF-8)::

    # scene=<id>
    # intrinsics=<w> <h> <fx> <fy> <cx> <cy>
    # convention=cam2world xyzw
    <name> <real|synthetic> x y z qx qy qz qw [a_0 ... a_{A-1}]

Optional trailing columns carry the image's appearance vector. Image files
are looked up relative to the pose file's directory, as ``<name>`` or
``<name>.ppm`` / ``<name>.png``.

Other conventions are declared in :data:`CONVENTIONS` and converted on load;
files are always written in the native convention.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from lens_forge.errors import DatasetError, DomainError
from lens_forge.geometry import PinholeIntrinsics, Pose, quat_conjugate, quat_multiply, rotate

NATIVE = "cam2world xyzw"
REAL = "real"
SYNTHETIC = "synthetic"
ORIGINS = (REAL, SYNTHETIC)
IMAGE_EXTENSIONS = (".ppm", ".png")

# quat_order: column order of the four quaternion values
# rotation:   whether the stored rotation maps camera->world or world->camera
# position:   "center" (camera center in world) or "translation" (t of world->camera)
# camera:     "opengl" (x right, y up, looks -z) or "opencv" (x right, y down, looks +z)
CONVENTIONS = {
    "cam2world xyzw": dict(quat_order="xyzw", rotation="cam2world", position="center", camera="opengl"),
    "cam2world wxyz": dict(quat_order="wxyz", rotation="cam2world", position="center", camera="opengl"),
    "world2cam wxyz": dict(quat_order="wxyz", rotation="world2cam", position="translation", camera="opencv"),
    # 7-Scenes ships camera-to-world matrices for a Kinect (OpenCV axes);
    # converted rows list the camera center and a scalar-first quaternion.
    "7scenes": dict(quat_order="wxyz", rotation="cam2world", position="center", camera="opencv"),
    # Cambridge Landmarks dataset_*.txt: camera center, scalar-first
    # world-to-camera quaternion, OpenCV axes.
    "cambridge": dict(quat_order="wxyz", rotation="world2cam", position="center", camera="opencv"),
}

# OpenCV camera axes -> OpenGL camera axes: rotate 180 degrees about x
_CV_TO_GL = np.array([1.0, 0.0, 0.0, 0.0])


def to_native(position, quat, convention):
    """Convert one stored pose row to a native camera-to-world :class:`Pose`."""
    conv = CONVENTIONS[convention]
    q = np.asarray(quat, dtype=np.float64)
    if conv["quat_order"] == "wxyz":
        q = np.array([q[1], q[2], q[3], q[0]])
    q = q / np.linalg.norm(q)
    p = np.asarray(position, dtype=np.float64)
    if conv["rotation"] == "world2cam":
        if conv["position"] == "translation":
            p = -rotate(quat_conjugate(q), p)
        q = quat_conjugate(q)
    elif conv["position"] == "translation":
        raise DomainError("translation-style positions need a world2cam rotation")
    if conv["camera"] == "opencv":
        q = quat_multiply(q, _CV_TO_GL)
    return Pose(p, q)


def matrix_to_pose(m, convention="7scenes"):
    """4x4 camera-to-world matrix (as in 7-Scenes ``frame-*.pose.txt``) to a Pose."""
    from lens_forge.geometry import matrix_to_quat

    m = np.asarray(m, dtype=np.float64).reshape(4, 4)
    q = matrix_to_quat(m[:3, :3])
    conv = CONVENTIONS[convention]
    if conv["camera"] == "opencv":
        q = quat_multiply(q, _CV_TO_GL)
    return Pose(m[:3, 3], q)


@dataclass(frozen=True, eq=False)
class PosedImage:
    name: str
    pose: Pose
    image_path: str = None
    origin: str = REAL
    appearance: np.ndarray = None

    def __post_init__(self):
        if self.origin not in ORIGINS:
            raise DomainError(f"origin must be one of {ORIGINS}, got {self.origin!r}")
        if not self.name or any(c.isspace() for c in self.name):
            raise DomainError(f"image name must be non-empty without whitespace: {self.name!r}")


@dataclass(frozen=True, eq=False)
class PosedDataset:
    images: list
    intrinsics: PinholeIntrinsics
    scene_id: str = "scene"
    _names: dict = field(default=None, repr=False)

    def __post_init__(self):
        names = {}
        for k, im in enumerate(self.images):
            if im.name in names:
                raise DatasetError(f"duplicate image name {im.name!r}")
            names[im.name] = k
        object.__setattr__(self, "images", list(self.images))
        object.__setattr__(self, "_names", names)

    def __len__(self):
        return len(self.images)

    def __iter__(self):
        return iter(self.images)

    def __getitem__(self, k):
        return self.images[k]

    @property
    def poses(self):
        return [im.pose for im in self.images]

    def by_origin(self, origin):
        return PosedDataset([im for im in self.images if im.origin == origin], self.intrinsics, self.scene_id)


# ---------------------------------------------------------------------------
# files


def _fmt(v):
    return repr(float(v))


def save_dataset(dataset, path):
    k = dataset.intrinsics
    with_app = any(im.appearance is not None for im in dataset.images)
    dim = max((len(im.appearance) for im in dataset.images if im.appearance is not None), default=0)
    lines = [
        f"# scene={dataset.scene_id}",
        f"# intrinsics={k.width} {k.height} {_fmt(k.fx)} {_fmt(k.fy)} {_fmt(k.cx)} {_fmt(k.cy)}",
        f"# convention={NATIVE}",
    ]
    for im in dataset.images:
        vals = [*im.pose.position, *im.pose.orientation]
        if with_app:
            a = np.zeros(dim) if im.appearance is None else im.appearance
            vals += list(a)
        lines.append(" ".join([im.name, im.origin] + [_fmt(v) for v in vals]))
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def _resolve_image(image_dir, name):
    for cand in (name,) + tuple(name + ext for ext in IMAGE_EXTENSIONS):
        p = os.path.join(image_dir, cand)
        if os.path.isfile(p):
            return p
    return None


def load_dataset(pose_file_path, image_dir=None, require_images=True, convention=None):
    """Parse a pose file. ``convention`` overrides the header's declaration."""
    base = os.path.dirname(os.path.abspath(pose_file_path))
    if image_dir is None:
        image_dir = base
    elif not os.path.isabs(image_dir):
        image_dir = os.path.join(base, image_dir)
    scene_id = "scene"
    intrinsics = None
    header_convention = NATIVE
    images = []
    seen = set()
    try:
        f = open(pose_file_path, encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"cannot open pose file {pose_file_path}: {exc}") from exc
    with f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            where = f"{pose_file_path}:{lineno}"
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                key, _, value = body.partition("=")
                key = key.strip()
                value = value.strip()
                if key == "scene":
                    scene_id = value
                elif key == "intrinsics":
                    try:
                        w, h, fx, fy, cx, cy = value.split()
                        intrinsics = PinholeIntrinsics(int(w), int(h), float(fx), float(fy), float(cx), float(cy))
                    except (ValueError, DomainError) as exc:
                        raise DatasetError(f"{where}: bad intrinsics header: {exc}") from exc
                elif key == "convention":
                    header_convention = value
                continue
            conv = convention or header_convention
            if conv not in CONVENTIONS:
                raise DatasetError(f"{where}: unknown pose convention {conv!r}")
            parts = line.split()
            if len(parts) < 9:
                raise DatasetError(f"{where}: expected 'name origin x y z q1 q2 q3 q4', got {len(parts)} fields")
            name, origin = parts[0], parts[1]
            if origin not in ORIGINS:
                raise DatasetError(f"{where}: origin must be 'real' or 'synthetic', got {origin!r}")
            try:
                vals = [float(v) for v in parts[2:]]
            except ValueError as exc:
                raise DatasetError(f"{where}: {exc}") from exc
            if not np.all(np.isfinite(vals)):
                raise DatasetError(f"{where}: non-finite value")
            qn = np.linalg.norm(vals[3:7])
            if abs(qn - 1.0) > 1e-3:
                raise DatasetError(f"{where}: quaternion norm {qn:.6g} deviates from 1 by more than 1e-3")
            if name in seen:
                raise DatasetError(f"{where}: duplicate image name {name!r}")
            seen.add(name)
            pose = to_native(vals[:3], vals[3:7], conv)
            appearance = np.array(vals[7:]) if len(vals) > 7 else None
            path = _resolve_image(image_dir, name)
            if path is None and require_images:
                raise DatasetError(f"{where}: image file for {name!r} not found in {image_dir}")
            images.append(PosedImage(name, pose, path, origin, appearance))
    if intrinsics is None:
        raise DatasetError(f"{pose_file_path}: missing '# intrinsics=' header")
    if not images:
        raise DatasetError(f"{pose_file_path}: empty dataset")
    return PosedDataset(images, intrinsics, scene_id)


def load_poses(pose_file_path):
    """Pose file without image resolution (e.g. placement output)."""
    return load_dataset(pose_file_path, require_images=False)


# ---------------------------------------------------------------------------
# combining and sampling


def merge_datasets(real, synthetic):
    """Concatenate; synthetic names colliding with real ones get a ``synth/`` prefix."""
    if real.intrinsics != synthetic.intrinsics:
        raise DatasetError("cannot merge datasets with different intrinsics")
    if real.scene_id != synthetic.scene_id:
        raise DatasetError(f"cannot merge scenes {real.scene_id!r} and {synthetic.scene_id!r}")
    taken = {im.name for im in real.images}
    merged = list(real.images)
    for im in synthetic.images:
        if im.name in taken:
            im = PosedImage("synth/" + im.name, im.pose, im.image_path, im.origin, im.appearance)
            if im.name in taken:
                raise DatasetError(f"name collision survives prefixing: {im.name!r}")
        taken.add(im.name)
        merged.append(im)
    return PosedDataset(merged, real.intrinsics, real.scene_id)


def sample_minibatch(dataset, batch_size, rng):
    """Uniform sample without replacement; no real/synthetic quota."""
    if batch_size < 1 or batch_size > len(dataset):
        raise DomainError(f"batch size {batch_size} not in [1, {len(dataset)}]")
    idx = rng.choice(len(dataset), size=batch_size, replace=False)
    return [dataset.images[i] for i in idx]


def dataset_from_poses(poses, intrinsics, scene_id="scene", origin=REAL, prefix=None, appearances=None):
    prefix = prefix or ("real" if origin == REAL else "synth")
    width = max(4, len(str(len(poses))))
    images = []
    for k, p in enumerate(poses):
        a = None if appearances is None else appearances[k]
        images.append(PosedImage(f"{prefix}_{k:0{width}d}", p, None, origin, a))
    return PosedDataset(images, intrinsics, scene_id)
