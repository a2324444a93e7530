"""Command-line interface.

Subcommands cover the whole workflow: `transform`/`inverse` move single
volumes in and out of the spherical domain, `origins` exposes the
cascade's origin selection, `run` executes the full pipeline on a case
directory, `eval` scores predictions, `phantom` builds the synthetic
test case and `demo-polar` renders the 2D intuition figures.

Exit codes: 0 success, 2 usage/config error, 3 bad input data,
4 segmenter failure, 5 internal error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, InputError, SegmenterError, SpheresegError
from .metrics import case_rows, evaluate_case, rows_to_csv, rows_to_table
from .nifti import read_nifti_image, read_nifti_labels, write_nifti
from .origins import SelectionConfig, first_pass_origins, second_pass_origins, third_pass_origins
from .phantom import PhantomSpec, generate_phantom
from .pipeline import GridConfig, load_config, run_cascade
from .svol import read_svol, write_svol
from .transform import (
    Origin,
    SphericalGrid,
    SphericalVolume,
    compute_r_max,
    forward_transform,
    inverse_project_labels,
    polar_transform_2d,
)
from .volume import (
    LabelVolume,
    MultiChannelVolume,
    ScalarVolume,
    Spacing,
    labels_from_region_masks,
    nonzero_mask,
    region_masks_from_labels,
    volume_center_mm,
)

log = logging.getLogger("sphereseg")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_SEGMENTER = 4
EXIT_INTERNAL = 5

_EPILOG = (
    "exit codes: 0 success, 2 usage/config error, 3 bad input data, "
    "4 segmenter failure, 5 internal error"
)


def _parse_triple(text: str, what: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise ConfigError(f"{what} expects X,Y,Z, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"{what} expects numbers, got {text!r}") from exc


def _parse_grid(text: str) -> GridConfig:
    parts = text.split(",")
    if len(parts) != 3:
        raise ConfigError(f"--grid expects NR,NT,NP, got {text!r}")
    try:
        n_r, n_t, n_p = (int(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"--grid expects integers, got {text!r}") from exc
    return GridConfig(n_r, n_t, n_p)


def _resolve_origin(text: str, dims, spacing: Spacing) -> Origin:
    if text == "center":
        return Origin(*volume_center_mm(dims, spacing))
    origin = Origin(*_parse_triple(text, "--origin"))
    ext = np.asarray(dims) * spacing.as_array()
    pos = np.array([origin.x, origin.y, origin.z])
    if (pos < 0).any() or (pos > ext).any():
        log.warning("origin %s lies outside the volume extent %s mm", pos.tolist(), ext.tolist())
    return origin


def _read_volume_file(path: Path):
    """Read .svol/.nii/.nii.gz into a volume object."""
    if not path.exists():
        raise InputError(f"no such file: {path}")
    if path.name.endswith(".svol"):
        return read_svol(path)
    return read_nifti_image(path)


def _read_labels_file(path: Path) -> LabelVolume:
    if not path.exists():
        raise InputError(f"no such file: {path}")
    if path.name.endswith(".svol"):
        vol = read_svol(path)
        if not isinstance(vol, LabelVolume):
            raise InputError(f"{path} does not hold labels")
        return vol
    return read_nifti_labels(path)


def _write_any(path: Path, volume) -> None:
    if path.name.endswith(".svol"):
        write_svol(path, volume)
    else:
        write_nifti(path, volume)


# ---------------------------------------------------------------------------
# transform / inverse


def cmd_transform(args) -> int:
    in_path = Path(args.input)
    out_path = Path(args.output)
    if args.labels:
        vol = _read_labels_file(in_path)
        interp = "nearest"
    else:
        read = _read_volume_file(in_path)
        if isinstance(read, LabelVolume):
            raise InputError(f"{in_path} holds labels; pass --labels")
        if isinstance(read, MultiChannelVolume):
            if read.n_channels != 1:
                raise InputError("transform expects a single-channel volume")
            vol = read.channels[0]
        else:
            vol = read
        interp = "trilinear"
    grid_cfg = args.grid
    origin = _resolve_origin(args.origin, vol.dims, vol.spacing)
    try:
        r_max = compute_r_max(vol, origin, args.rmax_mode)
    except SpheresegError:
        if args.rmax_mode != "surface":
            raise
        log.warning("volume has no nonzero voxels; r_max falls back to corners mode")
        r_max = compute_r_max(vol, origin, "corners")
    grid = SphericalGrid(grid_cfg.n_r, grid_cfg.n_theta, grid_cfg.n_phi, r_max, origin)
    sph = forward_transform(vol, grid, interp)
    if sph.is_labels:
        _write_any(out_path, LabelVolume(sph.data, Spacing(1.0, 1.0, 1.0)))
    else:
        _write_any(out_path, ScalarVolume(sph.data, Spacing(1.0, 1.0, 1.0)))
    sidecar = Path(args.sidecar) if args.sidecar else Path(str(out_path) + ".json")
    sidecar.write_text(
        json.dumps(
            {
                "origin": [origin.x, origin.y, origin.z],
                "grid": {
                    "n_r": grid.n_r,
                    "n_theta": grid.n_theta,
                    "n_phi": grid.n_phi,
                    "r_max": grid.r_max,
                },
                "labels": sph.is_labels,
                "source_dims": list(vol.dims),
                "source_spacing": [vol.spacing.sx, vol.spacing.sy, vol.spacing.sz],
            },
            indent=1,
        )
        + "\n"
    )
    log.info("wrote %s (+ sidecar %s)", out_path, sidecar)
    return EXIT_OK


def cmd_inverse(args) -> int:
    in_path = Path(args.input)
    sidecar = Path(args.sidecar) if args.sidecar else Path(str(in_path) + ".json")
    if not sidecar.exists():
        raise InputError(f"missing sidecar {sidecar}; run `transform` first or pass --sidecar")
    try:
        meta = json.loads(sidecar.read_text())
        g = meta["grid"]
        grid = SphericalGrid(
            int(g["n_r"]), int(g["n_theta"]), int(g["n_phi"]), float(g["r_max"]),
            Origin(*meta["origin"]),
        )
        if not meta.get("labels", False):
            raise InputError(f"{in_path} holds scalar data; inverse projection needs labels")
        dims = tuple(int(d) for d in meta["source_dims"])
        spacing = Spacing(*meta["source_spacing"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"bad sidecar {sidecar}: {exc}") from exc
    vol = _read_labels_file(in_path)
    svol = SphericalVolume(grid, vol.data, is_labels=True)
    back = inverse_project_labels(svol, dims, spacing)
    _write_any(Path(args.output), back)
    log.info("wrote %s", args.output)
    return EXIT_OK


# ---------------------------------------------------------------------------
# origins


def cmd_origins(args) -> int:
    cfg = SelectionConfig(n_origins=args.n_origins, rng_seed=args.seed)
    if args.pass_id == "first":
        vol = _read_volume_file(Path(args.input))
        if isinstance(vol, MultiChannelVolume):
            vol = vol.channels[0]
        if isinstance(vol, LabelVolume):
            mask = vol.data > 0
            spacing = vol.spacing
        else:
            mask = nonzero_mask(vol)
            spacing = vol.spacing
        oset = first_pass_origins(mask, spacing, cfg, mode=args.mode)
    else:
        labels = _read_labels_file(Path(args.input))
        wt, tc, _ = region_masks_from_labels(labels)
        fn = second_pass_origins if args.pass_id == "second" else third_pass_origins
        oset = fn(wt, tc, cfg)
    doc = {
        "pass": oset.pass_id,
        "seed": oset.seed,
        "requested": oset.requested,
        "origins": [[o.x, o.y, o.z] for o in oset.origins],
        "provenance": list(oset.provenance),
    }
    text = json.dumps(doc, indent=1) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# run


def _discover_channels(case_dir: Path) -> MultiChannelVolume:
    if not case_dir.is_dir():
        raise InputError(f"case directory not found: {case_dir}")
    paths = sorted(
        p
        for p in case_dir.iterdir()
        if p.is_file()
        and (p.name.endswith(".nii") or p.name.endswith(".nii.gz") or p.name.endswith(".svol"))
        and not p.name.startswith("truth")
    )
    if not paths:
        raise InputError(f"no channel volumes (*.nii, *.nii.gz, *.svol) in {case_dir}")
    volumes = []
    for p in paths:
        vol = _read_volume_file(p)
        if isinstance(vol, LabelVolume):
            raise InputError(f"{p} holds labels; channel volumes must be scalar")
        volumes.append(vol)
    if len(volumes) == 1 and isinstance(volumes[0], MultiChannelVolume):
        return volumes[0]
    channels = []
    for p, vol in zip(paths, volumes):
        if isinstance(vol, MultiChannelVolume):
            if vol.n_channels != 1:
                raise InputError(f"{p}: expected one channel per file, got {vol.n_channels}")
            channels.append(vol.channels[0])
        else:
            channels.append(vol)
    if len(channels) != 4:
        log.warning("found %d channel files (4 expected for T1/T1c/T2/FLAIR)", len(channels))
    return MultiChannelVolume(tuple(channels))


def _resolve_threads(flag_value: int | None, config_value: int) -> int:
    if flag_value is not None:
        return flag_value
    env = os.environ.get("SPHERESEG_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer SPHERESEG_THREADS=%r", env)
    return config_value


def cmd_run(args) -> int:
    if not args.config:
        raise ConfigError("run requires --config")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    threads = _resolve_threads(args.threads, cfg.threads)
    cfg = dataclasses.replace(cfg, threads=threads)
    volume = _discover_channels(Path(args.case_dir))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = run_cascade(volume, cfg)
    write_nifti(out_dir / "pred.nii.gz", report.final_labels)
    (out_dir / "report.json").write_text(json.dumps(report.summary(), indent=1) + "\n")
    (out_dir / "timings.json").write_text(
        json.dumps(report.stage_seconds, indent=1) + "\n"
    )
    rows = []
    for p in report.passes:
        for mask in p.merged:
            rows.append(
                f"{p.pass_id},{mask.region.value},{mask.voxel_count},"
                f"{mask.voxel_count * mask.spacing.voxel_volume_mm3:.3f}"
            )
    for mask in report.post:
        rows.append(
            f"final,{mask.region.value},{mask.voxel_count},"
            f"{mask.voxel_count * mask.spacing.voxel_volume_mm3:.3f}"
        )
    (out_dir / "report.csv").write_text(
        "stage,region,voxels,mm3\n" + "\n".join(rows) + "\n"
    )
    if args.keep_intermediates:
        inter = out_dir / "intermediates"
        inter.mkdir(exist_ok=True)
        for p in report.passes:
            write_nifti(inter / f"{p.pass_id}.nii.gz", labels_from_region_masks(*p.merged))
        if report.cartesian_wt is not None:
            cart = np.where(report.cartesian_wt.data, 2, 0).astype(np.uint8)
            write_nifti(
                inter / "cartesian_wt.nii.gz", LabelVolume(cart, report.cartesian_wt.spacing)
            )
    for w in report.warnings:
        log.warning("%s", w)
    log.info("wrote %s", out_dir / "pred.nii.gz")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args) -> int:
    pred = _read_labels_file(Path(args.pred))
    truth = _read_labels_file(Path(args.truth))
    cm = evaluate_case(pred, truth)
    rows = case_rows(args.case_id, cm)
    sys.stdout.write(rows_to_table(rows) + "\n")
    if args.csv:
        Path(args.csv).write_text(rows_to_csv(rows))
    return EXIT_OK


# ---------------------------------------------------------------------------
# phantom


def cmd_phantom(args) -> int:
    spec_kwargs = dict(seed=args.seed)
    if args.spacing is not None:
        spec_kwargs["spacing"] = Spacing(*args.spacing)
    if args.brain_axes is not None:
        spec_kwargs["brain_axes_mm"] = args.brain_axes
    if args.radii is not None:
        spec_kwargs["region_radii_mm"] = args.radii
    if args.tumor_offset is not None:
        spec_kwargs["tumor_offset_mm"] = args.tumor_offset
    if args.noise is not None:
        spec_kwargs["noise_sigma"] = args.noise
    spec = PhantomSpec(**spec_kwargs)
    channels, truth = generate_phantom(spec)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = ("t1", "t1ce", "t2", "flair")
    ext = ".svol" if args.format == "svol" else ".nii.gz"
    for i, ch in enumerate(channels.channels):
        tag = names[i] if i < len(names) else f"c{i}"
        _write_any(out_dir / f"ch{i}_{tag}{ext}", ch)
    _write_any(out_dir / f"truth{ext}", truth)
    log.info(
        "phantom: dims %s, tumor center %s mm, %d channels",
        truth.dims, spec.tumor_center_mm.tolist(), channels.n_channels,
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# demo-polar


def _load_image_2d(path: Path) -> np.ndarray:
    from PIL import Image

    if not path.exists():
        raise InputError(f"no such file: {path}")
    img = Image.open(path).convert("L")
    return np.asarray(img, dtype=np.float32) / 255.0


def _save_image_2d(path: Path, img: np.ndarray) -> None:
    from PIL import Image

    arr = np.clip(img, 0.0, 1.0)
    Image.fromarray((arr * 255.0 + 0.5).astype(np.uint8)).save(path)


def _rotate_about(img: np.ndarray, angle_rad: float, center: np.ndarray) -> np.ndarray:
    from scipy import ndimage

    c, s = np.cos(-angle_rad), np.sin(-angle_rad)
    mat = np.array([[c, -s], [s, c]])
    offset = center - mat @ center
    return ndimage.affine_transform(img, mat, offset=offset, order=1, cval=0.0)


def _scale_about(img: np.ndarray, factor: float, center: np.ndarray) -> np.ndarray:
    from scipy import ndimage

    mat = np.eye(2) / factor
    offset = center - mat @ center
    return ndimage.affine_transform(img, mat, offset=offset, order=1, cval=0.0)


def _synthetic_slice() -> np.ndarray:
    channels, _ = generate_phantom(PhantomSpec())
    ch0 = channels.channels[0]
    return ch0.data[:, :, ch0.dims[2] // 2].copy()


def _montage(panels: list[np.ndarray], columns: int, pad: int = 4) -> np.ndarray:
    cell_h = max(p.shape[0] for p in panels)
    cell_w = max(p.shape[1] for p in panels)
    rows = (len(panels) + columns - 1) // columns
    out = np.zeros(
        (rows * cell_h + (rows + 1) * pad, columns * cell_w + (columns + 1) * pad),
        dtype=np.float32,
    )
    for n, p in enumerate(panels):
        r, c = divmod(n, columns)
        y = pad + r * (cell_h + pad)
        x = pad + c * (cell_w + pad)
        out[y : y + p.shape[0], x : x + p.shape[1]] = p
    return out


def cmd_demo_polar(args) -> int:
    if args.synthetic:
        img = _synthetic_slice()
    elif args.input:
        img = _load_image_2d(Path(args.input))
    else:
        raise ConfigError("demo-polar needs an input image or --synthetic")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not img.any():
        log.warning("input image is empty; polar views will be blank")
    if args.origin == "center":
        center = (np.asarray(img.shape, dtype=np.float64) - 1.0) / 2.0
    else:
        parts = args.origin.split(",")
        if len(parts) != 2:
            raise ConfigError(f"--origin expects X,Y or center, got {args.origin!r}")
        center = np.array([float(parts[0]), float(parts[1])])
    rotated = _rotate_about(img, np.pi / 4.0, center)
    scaled = _scale_about(img, 2.0, center)
    variants = [("original", img), ("rotated", rotated), ("scaled", scaled)]
    panels = []
    for name, im in variants:
        polar = polar_transform_2d(im, tuple(center), args.n_r, args.n_theta)
        _save_image_2d(out_dir / f"{name}.png", im)
        _save_image_2d(out_dir / f"polar_{name}.png", polar)
        panels.append((im, polar))
    montage = _montage([p[0] for p in panels] + [p[1] for p in panels], columns=3)
    _save_image_2d(out_dir / "montage.png", montage)
    log.info("wrote demo panels to %s", out_dir)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sphereseg",
        description="Spherical-coordinate resampling and cascaded multi-origin segmentation.",
        epilog=_EPILOG,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser.add_argument("-q", "--quiet", action="store_true", help="errors only")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transform", help="resample a volume onto a spherical grid",
                       epilog=_EPILOG)
    p.add_argument("input", help="input volume (.nii, .nii.gz or .svol)")
    p.add_argument("output", help="output spherical volume (.svol or .nii[.gz])")
    p.add_argument("--labels", action="store_true",
                   help="input is a label volume (forces nearest-neighbour sampling)")
    p.add_argument("--origin", default="center", help="X,Y,Z in mm, or 'center' (default)")
    p.add_argument("--grid", type=_parse_grid, default=GridConfig(),
                   help="NR,NT,NP samples (default 128,256,128)")
    p.add_argument("--rmax-mode", choices=("surface", "corners"), default="surface",
                   help="adaptive radius rule (default surface, corner fallback when empty)")
    p.add_argument("--sidecar", help="metadata path (default OUTPUT.json)")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("inverse", help="project spherical labels back to a voxel grid",
                       epilog=_EPILOG)
    p.add_argument("input", help="spherical label volume (.svol or .nii[.gz])")
    p.add_argument("output", help="output label volume (.nii[.gz] or .svol)")
    p.add_argument("--sidecar", help="metadata written by `transform` (default INPUT.json)")
    p.set_defaults(func=cmd_inverse)

    p = sub.add_parser("origins", help="compute cascade origins from a volume or prediction",
                       epilog=_EPILOG)
    p.add_argument("input", help="image volume (first pass) or label volume (later passes)")
    p.add_argument("--pass", dest="pass_id", required=True,
                   choices=("first", "second", "third"))
    p.add_argument("--mode", choices=("infer", "train"), default="infer",
                   help="first pass only: train adds random in-brain origins")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-origins", type=int, default=4)
    p.add_argument("--out", help="write JSON here instead of stdout")
    p.set_defaults(func=cmd_origins)

    p = sub.add_parser("run", help="run the full cascade on a case directory",
                       epilog=_EPILOG)
    p.add_argument("case_dir", help="directory holding the channel volumes")
    p.add_argument("out_dir", help="output directory")
    p.add_argument("--config", required=True, help="pipeline config JSON")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--threads", type=int,
                   help="parallel origins (default: SPHERESEG_THREADS or config)")
    p.add_argument("--keep-intermediates", action="store_true",
                   help="also write per-pass label volumes")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="score a prediction against ground truth", epilog=_EPILOG)
    p.add_argument("pred")
    p.add_argument("truth")
    p.add_argument("--case-id", default="case")
    p.add_argument("--csv", help="also write rows to this CSV file")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("phantom", help="generate the synthetic brain phantom", epilog=_EPILOG)
    p.add_argument("out_dir")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--spacing", type=lambda s: _parse_triple(s, "--spacing"),
                   help="SX,SY,SZ mm per voxel")
    p.add_argument("--brain-axes", type=lambda s: _parse_triple(s, "--brain-axes"),
                   help="ellipsoid semi-axes in mm (default 70,85,60)")
    p.add_argument("--radii", type=lambda s: _parse_triple(s, "--radii"),
                   help="WT,TC,ET radii in mm (default 25,15,8)")
    p.add_argument("--tumor-offset", type=lambda s: _parse_triple(s, "--tumor-offset"),
                   help="tumor center offset from brain center in mm")
    p.add_argument("--noise", type=float, help="noise sigma (default 0.02)")
    p.add_argument("--format", choices=("nii", "svol"), default="nii")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("demo-polar", help="2D polar-transform demo panels", epilog=_EPILOG)
    p.add_argument("input", nargs="?", help="grayscale PNG/PGM slice")
    p.add_argument("out_dir")
    p.add_argument("--synthetic", action="store_true",
                   help="use a phantom mid-slice instead of an input image")
    p.add_argument("--origin", default="center", help="X,Y pixel origin or 'center'")
    p.add_argument("--n-r", type=int, default=128)
    p.add_argument("--n-theta", type=int, default=256)
    p.set_defaults(func=cmd_demo_polar)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.ERROR if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except (InputError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except SegmenterError as exc:
        log.error("%s", exc)
        return EXIT_SEGMENTER
    except SpheresegError as exc:
        log.error("%s", exc)
        return EXIT_INTERNAL
    except Exception:  # pragma: no cover - safety net
        log.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
