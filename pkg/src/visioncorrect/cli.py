"""Batch and diagnostic command line.

Subcommands: psf, precorrect, simulate, metrics, video, pose-replay.
Exit codes: 0 success, 2 usage, 3 I/O, 4 numerical/optical configuration.
"""

from __future__ import annotations

import argparse
import math
import sys
import time

import numpy as np

from . import image as img
from .config import EngineConfig
from .errors import VisionCorrectError
from .metrics import compare
from .pose import focal_px, load_pose_log, perspective_matrix, pose_to_kernel, warp_psf
from .precorrect import TileGrid, WienerParams, deconvolve, precorrect_color, simulate_view, tiled_deconvolve
from .psf import Kernel, OpticalSpec, ZernikeSpec, blur_radius, disk_psf, zernike_psf
from .ringing import HeuristicTextDetector, segment_precorrect
from .video import ArrayFrameSource, read_raw_video, run_pipeline, write_raw_video

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


def _parse_zernike_terms(tokens: list[str]) -> list[tuple[int, int, float]]:
    terms = []
    for tok in tokens:
        parts = tok.split(",")
        if len(parts) != 3:
            raise argparse.ArgumentTypeError(f"zernike term must be n,m,weight_um: {tok!r}")
        terms.append((int(parts[0]), int(parts[1]), float(parts[2])))
    return terms


def _optics_from_args(args, cfg: EngineConfig) -> OpticalSpec:
    pitch = args.pitch if args.pitch is not None else cfg.pixel_pitch_m
    pupil = args.pupil if args.pupil is not None else cfg.pupil_diameter_m
    distance = getattr(args, "distance", None) or 1.0
    if getattr(args, "sphere_diopters", None) is not None:
        return OpticalSpec.from_diopters(
            args.sphere_diopters, pupil_diameter_m=pupil,
            view_distance_m=distance, pixel_pitch_m=pitch,
            eye_depth_m=cfg.eye_depth_m,
        )
    return OpticalSpec(
        pupil_diameter_m=pupil, view_distance_m=distance,
        pixel_pitch_m=pitch, eye_depth_m=cfg.eye_depth_m,
    )


def _kernel_from_args(args, cfg: EngineConfig) -> Kernel:
    if getattr(args, "zernike", None):
        spec = ZernikeSpec(
            coefficients=_parse_zernike_terms(args.zernike),
            wavelength_m=cfg.wavelength_m,
            grid_size=args.grid_size,
        )
        kernel = zernike_psf(spec)
    else:
        if getattr(args, "radius_px", None) is not None:
            radius = args.radius_px
        else:
            radius = blur_radius(_optics_from_args(args, cfg)).pixels
        size = args.size if args.size else 2 * math.ceil(radius) + 1
        if size % 2 == 0:
            size += 1
        kernel = disk_psf(radius, size)
    ax = math.radians(getattr(args, "angle_x", 0.0))
    ay = math.radians(getattr(args, "angle_y", 0.0))
    if ax or ay:  # off-axis viewer: perspective-warp whatever kernel was built
        f = focal_px(kernel.width, math.radians(cfg.fov_deg))
        h = perspective_matrix(ax, ay, xi=f, f=f, cols=kernel.width, rows=kernel.height)
        kernel = warp_psf(kernel, h)
    return kernel


def _params(args, cfg: EngineConfig) -> WienerParams:
    rho = args.rho if args.rho is not None else cfg.rho
    rho_text = args.rho_text if getattr(args, "rho_text", None) is not None else max(cfg.rho_text, rho)
    return WienerParams(rho=rho, rho_text=rho_text, spectrum_floor=cfg.spectrum_floor)


def cmd_psf(args, cfg: EngineConfig) -> int:
    kernel = _kernel_from_args(args, cfg)
    out = args.output
    if out.endswith(".png"):
        with open(out, "wb") as fh:
            fh.write(kernel.to_png_bytes())
    else:
        with open(out, "w", encoding="ascii") as fh:
            fh.write(kernel.to_text())
    print(f"kernel {kernel.width}x{kernel.height} sum={kernel.values.sum():.9f} -> {out}")
    return EXIT_OK


def cmd_precorrect(args, cfg: EngineConfig) -> int:
    source = img.load_png(args.input)
    kernel = _kernel_from_args(args, cfg)
    params = _params(args, cfg)
    grid = TileGrid(args.tile, args.pad) if args.tile else None
    if args.ringing:
        out = segment_precorrect(source, kernel, params, HeuristicTextDetector())
    elif source.colorspace == img.RGB:
        out = precorrect_color(source, kernel, params, grid=grid)
    elif grid is not None:
        out = tiled_deconvolve(source, kernel, params, grid)
    else:
        out = deconvolve(source, kernel, params)
    img.save_png(out, args.output)
    print(f"precorrected {source.width}x{source.height} -> {args.output}")
    return EXIT_OK


def cmd_simulate(args, cfg: EngineConfig) -> int:
    source = img.load_png(args.input)
    kernel = _kernel_from_args(args, cfg)
    img.save_png(simulate_view(source, kernel), args.output)
    print(f"simulated view -> {args.output}")
    return EXIT_OK


def cmd_metrics(args, cfg: EngineConfig) -> int:
    a = img.load_png(args.image_a)
    b = img.load_png(args.image_b)
    report = compare(b, a)
    print(report.to_json(indent=2))
    return EXIT_OK


def cmd_video(args, cfg: EngineConfig) -> int:
    with open(args.input, "rb") as fh:
        frames, fps = read_raw_video(fh)
    if not frames:
        print("no frames in input", file=sys.stderr)
        return EXIT_IO
    kernel = _kernel_from_args(args, cfg)
    params = _params(args, cfg)
    fps = args.fps or fps
    grid = TileGrid(args.tile, args.pad) if args.tile else None
    out_frames: dict[int, np.ndarray] = {}

    t0 = time.perf_counter()
    session = run_pipeline(
        ArrayFrameSource(frames, fps), kernel, params,
        sink=lambda i, frame: out_frames.setdefault(i, frame),
        grid=grid, cache_seconds=args.cache_seconds, realtime=False,
    )
    session.join()
    wall = time.perf_counter() - t0
    with open(args.output, "wb") as fh:
        write_raw_video(fh, (out_frames[i] for i in sorted(out_frames)), fps)
    stats = session.stats
    print(
        f"{stats.frames_presented} frames in {wall:.2f}s "
        f"({stats.frames_presented / wall:.1f} FPS), "
        f"mean {stats.mean_processing_ms:.1f} ms/frame, underruns {stats.underruns}"
    )
    return EXIT_OK


def cmd_pose_replay(args, cfg: EngineConfig) -> int:
    samples = load_pose_log(args.pose_log)
    if not samples:
        print("empty pose log", file=sys.stderr)
        return EXIT_IO
    source = img.load_png(args.input)
    params = _params(args, cfg)
    spec = _optics_from_args(args, cfg)
    for n, (ts, pose) in enumerate(samples):
        kernel = pose_to_kernel(pose, spec.with_distance(pose.distance_m))
        corrected = (
            precorrect_color(source, kernel, params)
            if source.colorspace == img.RGB
            else deconvolve(source, kernel, params)
        )
        stem = f"{args.output_prefix}{n:04d}"
        img.save_png(corrected, stem + ".png")
        with open(stem + ".kernel.txt", "w", encoding="ascii") as fh:
            fh.write(kernel.to_text())
        print(f"t={ts:.0f}ms d={pose.distance_m:.3f}m "
              f"angles=({math.degrees(pose.theta_x):.1f},{math.degrees(pose.theta_y):.1f})deg "
              f"kernel={kernel.width}px -> {stem}.png")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="visioncorrect",
        description="Precompensate images and video for a viewer's refractive blur.",
    )
    parser.add_argument("--config", help="key=value config file")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_kernel_flags(p, with_pose=False):
        p.add_argument("--radius-px", type=float, default=None, help="disk radius in pixels")
        p.add_argument("--sphere-diopters", type=float, default=None, help="spherical prescription")
        p.add_argument("--zernike", nargs="+", default=None, metavar="N,M,UM",
                       help="Zernike terms as n,m,weight_um")
        p.add_argument("--size", type=int, default=0, help="kernel grid side (odd)")
        p.add_argument("--grid-size", type=int, default=64, help="pupil samples for --zernike")
        p.add_argument("--pitch", type=float, default=None, help="display pixel pitch (m)")
        p.add_argument("--pupil", type=float, default=None, help="pupil diameter (m)")
        if with_pose:
            p.add_argument("--distance", type=float, default=None, help="viewing distance (m)")
            p.add_argument("--angle-x", type=float, default=0.0, help="horizontal view angle (deg)")
            p.add_argument("--angle-y", type=float, default=0.0, help="vertical view angle (deg)")

    p_psf = sub.add_parser("psf", help="render a kernel to PNG or text")
    add_kernel_flags(p_psf, with_pose=True)
    p_psf.add_argument("--output", "-o", required=True)
    p_psf.set_defaults(fn=cmd_psf)

    p_pre = sub.add_parser("precorrect", help="precorrect an image")
    add_kernel_flags(p_pre, with_pose=True)
    p_pre.add_argument("--rho", type=float, default=None)
    p_pre.add_argument("--rho-text", type=float, default=None)
    p_pre.add_argument("--tile", type=int, default=0, help="tile side (0 = whole image)")
    p_pre.add_argument("--pad", type=int, default=16, help="tile overlap padding")
    p_pre.add_argument("--ringing", action=argparse.BooleanOptionalAction, default=False,
                       help="edge-mask compositing with text-aware regularization")
    p_pre.add_argument("input")
    p_pre.add_argument("output")
    p_pre.set_defaults(fn=cmd_precorrect)

    p_sim = sub.add_parser("simulate", help="apply the forward blur (perception preview)")
    add_kernel_flags(p_sim, with_pose=True)
    p_sim.add_argument("input")
    p_sim.add_argument("output")
    p_sim.set_defaults(fn=cmd_simulate)

    p_met = sub.add_parser("metrics", help="compare two images; JSON report")
    p_met.add_argument("image_a")
    p_met.add_argument("image_b")
    p_met.set_defaults(fn=cmd_metrics)

    p_vid = sub.add_parser("video", help="precorrect a raw-frame video stream")
    add_kernel_flags(p_vid, with_pose=True)
    p_vid.add_argument("--rho", type=float, default=None)
    p_vid.add_argument("--rho-text", type=float, default=None)
    p_vid.add_argument("--fps", type=float, default=0.0, help="override source fps")
    p_vid.add_argument("--cache-seconds", type=float, default=3.0)
    p_vid.add_argument("--tile", type=int, default=256)
    p_vid.add_argument("--pad", type=int, default=16)
    p_vid.add_argument("input")
    p_vid.add_argument("output")
    p_vid.set_defaults(fn=cmd_video)

    p_rep = sub.add_parser("pose-replay", help="corrected frames for each pose-log sample")
    add_kernel_flags(p_rep, with_pose=True)
    p_rep.add_argument("--rho", type=float, default=None)
    p_rep.add_argument("--rho-text", type=float, default=None)
    p_rep.add_argument("pose_log")
    p_rep.add_argument("input")
    p_rep.add_argument("output_prefix")
    p_rep.set_defaults(fn=cmd_pose_replay)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = EngineConfig()
    try:
        if args.config:
            cfg.apply_file(args.config)
        return args.fn(args, cfg)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO if isinstance(exc, OSError) else EXIT_USAGE
    except VisionCorrectError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
