"""``lens-forge``: command line front end.

Stages talk to each other only through files::

    lens-forge volume SCENE POSES --out VOLDIR          -> VOLDIR/occupied.txt
    lens-forge place POSES VOLDIR/occupied.txt --out D  -> D/poses.txt
    lens-forge render SCENE D/poses.txt --out-dir IMG   -> IMG/*.ppm, IMG/poses.txt
    lens-forge ablate SCENE POSES --out REP             -> REP/report.tsv, REP/report.long.tsv

Every output directory also gets a ``manifest.json``.

Exit codes: 0 ok, 2 usage or parse error, 3 domain error,
4 placement infeasible, 5 ``--check`` failed.
"""

import argparse
import hashlib
import json
import math
import os
import re
import sys
import time
from dataclasses import asdict, replace

import numpy as np

from lens_forge import __version__, presets
from lens_forge.errors import DatasetError, DomainError, PlacementError, RenderError
from lens_forge.geometry import bounding_box, extend_box

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DOMAIN = 3
EXIT_PLACEMENT = 4
EXIT_CHECK = 5

SEED_ENV = "LENS_FORGE_SEED"
MANIFEST = "manifest.json"


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument types


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _nonneg_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def _finite_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"must be finite, got {text!r}")
    return v


def _size(text):
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None
    if w < 1 or h < 1:
        raise argparse.ArgumentTypeError(f"image size must be positive, got {text!r}")
    return w, h


def _ratios(text):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals or any(v < 0 or not math.isfinite(v) for v in vals):
        raise argparse.ArgumentTypeError(f"ratios must be finite and >= 0, got {text!r}")
    return vals


def _default_seed():
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV}={raw!r} is not an integer") from None


# ---------------------------------------------------------------------------
# parser


def _add_preset(p):
    p.add_argument("--preset", choices=sorted(presets.PRESETS), default=presets.DEFAULT_PRESET,
                   help=f"parameter preset for unset flags (default: {presets.DEFAULT_PRESET})")


def _add_seed(p):
    p.add_argument("--seed", type=int, default=None,
                   help=f"random seed (default: ${SEED_ENV} or 0)")


def _help(key, text):
    return f"{text} (default per preset: {presets.describe(key)})"


def _add_volume_flags(p):
    p.add_argument("--rv", type=_positive_int, default=None, help=_help("r_v", "grid resolution r_v"))
    p.add_argument("--t-sigma", type=_finite_float, default=None, help=_help("t_sigma", "density threshold"))
    p.add_argument("--e-max", type=_finite_float, default=None, help=_help("e_max", "pose box extension in m"))


def _add_place_flags(p, with_n=True):
    if with_n:
        p.add_argument("--n", type=_positive_int, required=True, help="number of virtual cameras")
    p.add_argument("--d-sigma", type=_finite_float, default=None, help=_help("d_sigma", "clearance in m"))
    p.add_argument("--d-max", type=_finite_float, default=None, help=_help("d_max", "max distance to a real camera in m"))
    p.add_argument("--theta", type=_finite_float, default=None, help=_help("theta", "orientation perturbation in degrees"))
    p.add_argument("--mode", choices=("planar-2d", "volumetric-3d"), default=None, help=_help("mode", "candidate grid"))
    p.add_argument("--plane-height", type=_finite_float, default=None,
                   help="z of the placement plane in planar mode (default: mean training z)")
    p.add_argument("--r0", type=_positive_int, default=None, help=_help("r_0", "initial grid resolution"))
    p.add_argument("--sigma-r", type=_positive_int, default=None, help=_help("sigma_r", "resolution increment"))
    p.add_argument("--max-iterations", type=_positive_int, default=64, help="refinement limit (default: 64)")
    p.add_argument("--no-volume-pruning", action="store_true", help="skip the clearance test (ablation)")


def _add_render_flags(p, default_size=None):
    p.add_argument("--nc", type=_positive_int, default=None,
                   help="coarse samples per ray (default per preset: "
                        + ", ".join(f"{k} {v[0]}" for k, v in presets.SAMPLING.items()) + ")")
    p.add_argument("--nf", type=_nonneg_int, default=None,
                   help="fine samples per ray (default per preset: "
                        + ", ".join(f"{k} {v[1]}" for k, v in presets.SAMPLING.items()) + ")")
    p.add_argument("--size", type=_size, default=default_size,
                   help="output size WxH; intrinsics are rescaled (default: %s)"
                        % ("from the pose file" if default_size is None else "%dx%d" % default_size))
    p.add_argument("--near", type=_finite_float, default=None, help="near plane in m (default: 0.05 x box diagonal)")
    p.add_argument("--far", type=_finite_float, default=None, help="far plane in m (default: 1.5 x box diagonal)")
    p.add_argument("--stratified", action=argparse.BooleanOptionalAction, default=True,
                   help="jitter coarse samples inside their bins (default: on)")
    p.add_argument("--jobs", type=_positive_int, default=1, help="worker processes (default: 1)")


def build_parser():
    parser = argparse.ArgumentParser(prog="lens-forge", description="Density-aware virtual camera placement "
                                     "and novel view rendering for pose-regression data augmentation.")
    parser.add_argument("--version", action="version", version=f"lens-forge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("volume", help="extract occupied grid points from a scene")
    p.add_argument("scene_file")
    p.add_argument("pose_file")
    _add_preset(p)
    _add_volume_flags(p)
    p.add_argument("--out", required=True, help="output directory (writes occupied.txt)")

    p = sub.add_parser("place", help="place virtual cameras")
    p.add_argument("pose_file")
    p.add_argument("occupied_file")
    _add_preset(p)
    _add_place_flags(p)
    p.add_argument("--e-max", type=_finite_float, default=None, help=_help("e_max", "pose box extension in m"))
    _add_seed(p)
    p.add_argument("--out", required=True, help="output directory (writes poses.txt)")

    p = sub.add_parser("render", help="render images at the poses of a pose file")
    p.add_argument("scene_file")
    p.add_argument("pose_file")
    _add_preset(p)
    _add_render_flags(p)
    p.add_argument("--e-max", type=_finite_float, default=None,
                   help=_help("e_max", "pose box extension used for default near/far, in m"))
    p.add_argument("--appearance", choices=("random", "fixed"), default="random",
                   help="random: interpolate the scene's appearance bank; fixed: zero vector (default: random)")
    _add_seed(p)
    p.add_argument("--out-dir", required=True, help="output directory (images and poses.txt)")

    p = sub.add_parser("ablate", help="localization error versus synthetic/real ratio")
    p.add_argument("scene_file")
    p.add_argument("pose_file")
    p.add_argument("--ratios", type=_ratios, default=list(presets.DEFAULT_RATIOS),
                   help="comma-separated synthetic/real ratios (default: %s)"
                        % ",".join(f"{r:g}" for r in presets.DEFAULT_RATIOS))
    p.add_argument("--check", action="store_true",
                   help="exit 5 unless translation error is non-increasing and the last ratio reaches "
                        f"<= {presets.CHECK_MAX_RATIO_FRACTION} of the baseline")
    _add_preset(p)
    _add_volume_flags(p)
    _add_place_flags(p, with_n=False)
    _add_render_flags(p, default_size=(64, 64))
    p.add_argument("--test-poses", default=None, help="pose file of test cameras (default: uniform random)")
    p.add_argument("--n-test", type=_positive_int, default=200, help="uniform test poses to draw (default: 200)")
    p.add_argument("--downsample", type=_positive_int, default=8, help="retrieval box-downsample factor (default: 8)")
    p.add_argument("--appearance", choices=("random", "fixed"), default="random",
                   help="appearance for synthetic views (default: random)")
    _add_seed(p)
    p.add_argument("--out", required=True, help="output directory (writes report.tsv)")

    p = sub.add_parser("reference", help="write a bundled reference scene and its training poses")
    p.add_argument("name", choices=("street", "box-obstacle"))
    p.add_argument("--size", type=_size, default=(64, 64), help="image size in the pose file (default: 64x64)")
    p.add_argument("--out", required=True, help="output directory (writes scene.json and poses.txt)")
    return parser


# ---------------------------------------------------------------------------
# helpers


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _timestamp():
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = int(epoch) if epoch else time.time()
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


def _write_manifest(out_dir, command, seed, inputs, config, outputs, started):
    manifest = {
        "tool": "lens-forge",
        "tool_version": __version__,
        "command": command,
        "seed": seed,
        "timestamps": {"started": started, "finished": _timestamp()},
        # keyed by role and basename so reruns from other directories match byte for byte
        "inputs": {role: {"name": os.path.basename(p), "sha256": _sha256(p)} for role, p in inputs.items()},
        "config": config,
        "outputs": {name: _sha256(os.path.join(out_dir, name)) for name in outputs},
    }
    with open(os.path.join(out_dir, MANIFEST), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True, default=_jsonable)
        f.write("\n")


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, tuple):
        return list(v)
    return str(v)


def _resolve(args, keys):
    """Preset values overridden by explicitly given flags."""
    values = presets.preset(args.preset)
    flag = {"r_v": "rv", "r_0": "r0"}
    for key in keys:
        v = getattr(args, flag.get(key, key), None)
        if v is not None:
            values[key] = v
    return {k: values[k] for k in keys}


def _seed(args):
    return args.seed if args.seed is not None else _default_seed()


_FLAG_NAMES = {
    "r_v": "--rv", "t_sigma": "--t-sigma", "e_max": "--e-max", "d_sigma": "--d-sigma", "d_max": "--d-max",
    "theta": "--theta", "r_0": "--r0", "sigma_r": "--sigma-r", "max_iterations": "--max-iterations",
    "n_coarse": "--nc", "n_fine": "--nf", "t_near": "--near", "t_far": "--far", "plane height": "--plane-height",
}
_FLAG_RE = re.compile(r"\b(" + "|".join(re.escape(k) for k in sorted(_FLAG_NAMES, key=len, reverse=True)) + r")\b")


def _name_flags(message):
    """Rewrite parameter names in a validation message as the flags that set them."""
    return _FLAG_RE.sub(lambda m: _FLAG_NAMES[m.group(1)], message)


def _warn(msg):
    print(f"lens-forge: warning: {msg}", file=sys.stderr)


def _load_scene(path):
    from lens_forge.scene import load_scene

    try:
        return load_scene(path)
    except OSError as exc:
        raise DatasetError(f"cannot read scene file {path}: {exc}") from exc
    except DomainError as exc:
        raise DatasetError(str(exc)) from exc


def _load_poses(path, require_images=False):
    from lens_forge.dataset import load_dataset

    return load_dataset(path, require_images=require_images)


def _render_config(args, box, seed, background=(0.0, 0.0, 0.0)):
    from lens_forge.render import RenderConfig

    nc_default, nf_default = presets.SAMPLING[args.preset]
    cfg = RenderConfig(n_coarse=args.nc if args.nc is not None else nc_default,
                       n_fine=args.nf if args.nf is not None else nf_default,
                       t_near=args.near, t_far=args.far, stratified=args.stratified, seed=seed,
                       background_color=tuple(float(c) for c in background))
    return cfg.with_box_defaults(box)


def _intrinsics(dataset, size):
    k = dataset.intrinsics
    if size is None:
        return k
    return k.scaled(size[0], size[1])


def _place_config(args, seed, n=1):
    from lens_forge.placement import PlacementConfig

    v = _resolve(args, ("d_sigma", "d_max", "theta", "mode", "e_max", "r_0", "sigma_r"))
    return PlacementConfig(n=n, seed=seed, plane_height=args.plane_height, max_iterations=args.max_iterations,
                           volume_pruning=not args.no_volume_pruning, **v)


# ---------------------------------------------------------------------------
# commands


def cmd_volume(args):
    from lens_forge.volume import VolumeConfig, extract_density_volume, save_occupied

    started = _timestamp()
    cfg = VolumeConfig(**_resolve(args, ("r_v", "t_sigma", "e_max")))
    scene = _load_scene(args.scene_file)
    poses = _load_poses(args.pose_file).poses
    occ = extract_density_volume(scene, poses, cfg)
    if occ.count == 0:
        _warn(f"no grid point exceeds t_sigma={cfg.t_sigma}; occupied set is empty")
    os.makedirs(args.out, exist_ok=True)
    save_occupied(occ, os.path.join(args.out, "occupied.txt"))
    _write_manifest(args.out, "volume", None, {"scene": args.scene_file, "poses": args.pose_file},
                    {**asdict(cfg), "grid_count": occ.grid_count, "occupied": occ.count, "spacing": occ.spacing},
                    ["occupied.txt"], started)
    print(f"{occ.count} of {occ.grid_count} grid points occupied (spacing {occ.spacing:.6g} m)", file=sys.stderr)
    return EXIT_OK


def cmd_place(args):
    from lens_forge.dataset import SYNTHETIC, dataset_from_poses, save_dataset
    from lens_forge.placement import place_cameras
    from lens_forge.volume import load_occupied

    started = _timestamp()
    seed = _seed(args)
    cfg = _place_config(args, seed, n=args.n)
    real = _load_poses(args.pose_file)
    occ = load_occupied(args.occupied_file)
    cams = place_cameras(real.poses, occ, cfg)
    out = dataset_from_poses(cams.poses, real.intrinsics, real.scene_id, origin=SYNTHETIC)
    os.makedirs(args.out, exist_ok=True)
    save_dataset(out, os.path.join(args.out, "poses.txt"))
    _write_manifest(args.out, "place", seed, {"poses": args.pose_file, "occupied": args.occupied_file},
                    {**asdict(cfg), "iterations_used": cams.iterations_used,
                     "final_resolution": cams.final_resolution, "spacing": cams.spacing,
                     "candidate_counts": cams.candidate_counts},
                    ["poses.txt"], started)
    print(f"placed {len(cams.poses)} cameras after {cams.iterations_used} iteration(s), "
          f"resolution {cams.final_resolution}", file=sys.stderr)
    return EXIT_OK


def cmd_render(args):
    from lens_forge.dataset import PosedDataset, PosedImage, save_dataset
    from lens_forge.imageio import write_ppm
    from lens_forge.render import render_batch
    from lens_forge.scene import interpolate_appearance, zero_appearance

    started = _timestamp()
    seed = _seed(args)
    e_max = _resolve(args, ("e_max",))["e_max"]
    data = _load_poses(args.pose_file)
    intr = _intrinsics(data, args.size)
    scene = _load_scene(args.scene_file)
    cfg = _render_config(args, extend_box(bounding_box(data.poses), e_max), seed, scene.background_color)

    rng = np.random.default_rng([seed, 17])
    appearances = []
    for im in data.images:
        if args.appearance == "fixed":
            appearances.append(zero_appearance(scene.appearance_dim))
        elif scene.appearances:
            appearances.append(interpolate_appearance(scene.appearances, rng))
        elif im.appearance is not None:
            appearances.append(im.appearance)
        else:
            appearances.append(zero_appearance(scene.appearance_dim))

    os.makedirs(args.out_dir, exist_ok=True)
    total = len(data.images)

    def progress(k):
        print(f"rendered {k + 1}/{total} {data.images[k].name}", file=sys.stderr)

    images = render_batch(scene, [(im.pose, a) for im, a in zip(data.images, appearances)], intr, cfg,
                          parallelism=args.jobs, progress=progress)
    outputs = []
    records = []
    for im, a, img in zip(data.images, appearances, images):
        fname = im.name.replace("/", "_") + ".ppm"
        write_ppm(os.path.join(args.out_dir, fname), img)
        outputs.append(fname)
        records.append(PosedImage(fname[:-4], im.pose, os.path.join(args.out_dir, fname), im.origin, a))
    save_dataset(PosedDataset(records, intr, data.scene_id), os.path.join(args.out_dir, "poses.txt"))
    outputs.append("poses.txt")
    config = {**asdict(cfg), "appearance": args.appearance, "size": [intr.width, intr.height]}
    _write_manifest(args.out_dir, "render", seed, {"scene": args.scene_file, "poses": args.pose_file}, config, outputs, started)
    return EXIT_OK


def cmd_ablate(args):
    from lens_forge import evaluation as ev

    started = _timestamp()
    seed = _seed(args)
    if 0.0 not in args.ratios:
        raise UsageError("--ratios must include 0 (the baseline)")
    vol = _resolve(args, ("r_v", "t_sigma"))
    place_cfg = _place_config(args, seed)
    real = _load_poses(args.pose_file)
    test = _load_poses(args.test_poses) if args.test_poses else None
    intr = _intrinsics(real, args.size)
    box = extend_box(bounding_box(real.poses), place_cfg.e_max)
    scene = _load_scene(args.scene_file)
    render_cfg = _render_config(args, box, seed, scene.background_color)

    setup = ev.AblationSetup(intr, render_cfg, place_cfg, volume_r_v=vol["r_v"], volume_t_sigma=vol["t_sigma"],
                             appearance=args.appearance, downsample=args.downsample, jobs=args.jobs, seed=seed)
    occupied = ev.occupied_for(scene, real.poses, setup)
    if test is None:
        test_poses = ev.uniform_test_poses(real.poses, args.n_test, place_cfg.d_max, place_cfg.d_sigma,
                                           place_cfg.e_max, place_cfg.theta, place_cfg.mode, seed=[seed, 99],
                                           occupied_points=occupied, plane_height=place_cfg.plane_height)
    else:
        test_poses = test.poses
    rows = ev.run_ablation(scene, real.poses, test_poses, args.ratios, setup, occupied_points=occupied)

    os.makedirs(args.out, exist_ok=True)
    ev.emit_report(rows, os.path.join(args.out, "report.tsv"))
    for r in rows:
        print(f"ratio {r.ratio:g}: median {r.median_translation:.4f} m / {r.median_rotation:.3f} deg, "
              f"improvement {100 * r.relative_improvement_translation:.1f}%, "
              f"{r.n_synthetic} synthetic, {r.violations} clearance violations", file=sys.stderr)
    inputs = {"scene": args.scene_file, "poses": args.pose_file}
    if args.test_poses:
        inputs["test_poses"] = args.test_poses
    config = {"ratios": args.ratios, "placement": asdict(place_cfg), "render": asdict(render_cfg),
              "volume": vol, "size": [intr.width, intr.height], "downsample": args.downsample,
              "appearance": args.appearance, "n_test": len(test_poses)}
    status = EXIT_OK
    if args.check:
        checks = ev.check_ablation(rows, presets.CHECK_MAX_RATIO_FRACTION)
        config["checks"] = [{"name": n, "passed": bool(ok), "detail": d} for n, ok, d in checks]
        for name, ok, detail in checks:
            print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}", file=sys.stderr)
        if not all(ok for _, ok, _ in checks):
            status = EXIT_CHECK
    _write_manifest(args.out, "ablate", seed, inputs, config, ["report.tsv", "report.long.tsv"], started)
    return status


def cmd_reference(args):
    from lens_forge import reference
    from lens_forge.dataset import dataset_from_poses, save_dataset
    from lens_forge.geometry import PinholeIntrinsics
    from lens_forge.scene import save_scene

    if args.name == "street":
        scene, poses = reference.reference_scene(), reference.line_trajectory()
    else:
        scene, poses = reference.box_obstacle_scene(), reference.box_obstacle_trajectory()
    intr = PinholeIntrinsics.from_fov(args.size[0], args.size[1], reference.FOV_DEG)
    os.makedirs(args.out, exist_ok=True)
    save_scene(scene, os.path.join(args.out, "scene.json"))
    save_dataset(dataset_from_poses(poses, intr, args.name), os.path.join(args.out, "poses.txt"))
    return EXIT_OK


COMMANDS = {"volume": cmd_volume, "place": cmd_place, "render": cmd_render, "ablate": cmd_ablate,
            "reference": cmd_reference}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"lens-forge {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DatasetError as exc:
        print(f"lens-forge {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PlacementError as exc:
        print(f"lens-forge {args.command}: placement infeasible: {exc}", file=sys.stderr)
        return EXIT_PLACEMENT
    except (DomainError, RenderError) as exc:
        print(f"lens-forge {args.command}: error: {_name_flags(str(exc))}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"lens-forge {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
