"""Command-line front end.

Commands:
  fill      cover a target image with a long stroke (stipple + TSP init)
  abstract  stroke-based image fit with key-point multiplicity and optional
            external gradient provider
  areas     closed-area vectorization with quantized palette colors
  render    rasterize a saved scene (.svg with metadata or .json) to PNG
  export    re-export a saved scene as SVG

Every run is reproducible from (config, seed); flags override config values.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, default_config, load_config
from .engine import EngineAbort, OptimJob, Scene, ScenePath, render_scene, run
from .losses import LossWeights
from .palette import kmeans_palette, parse_hex_palette
from .pngio import read_png, write_png
from .raster import RasterSettings
from .seeding import area_seeds, density_from_image, tsp_path, voronoi_stipple
from .splines import KeyPointPath
from .svgio import export_svg, load_scene, save_scene


def _add_common(p):
    p.add_argument("--config", help="INI config file; flags override it")
    p.add_argument("--out", help="output SVG path")
    p.add_argument("--trace", help="trace CSV path")
    p.add_argument("--report", action="store_true",
                   help="write a matplotlib report PNG next to the output")
    p.add_argument("--png", help="also write a raster preview PNG")
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--keypoints", type=int)
    p.add_argument("--degree", type=int)
    p.add_argument("--width-init", type=float, dest="width_init")
    p.add_argument("--target-opacity", type=float, dest="target_opacity")
    p.add_argument("--lambda-smooth", type=float, dest="lambda_smooth")
    p.add_argument("--lambda-box", type=float, dest="lambda_box")
    p.add_argument("--lambda-repul", type=float, dest="lambda_repul")
    p.add_argument("--lambda-coverage", type=float, dest="lambda_coverage")
    p.add_argument("--lambda-balance", type=float, dest="lambda_balance")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="inkspline",
        description="Key-point B-spline image abstraction with a "
        "differentiable rasterizer",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fill = sub.add_parser("fill", help="space-filling stroke over a target")
    p_fill.add_argument("--target", required=True)
    p_fill.add_argument("--closed", action="store_true")
    _add_common(p_fill)

    p_abs = sub.add_parser("abstract", help="stroke abstraction of a target")
    p_abs.add_argument("--target", required=True)
    p_abs.add_argument("--multiplicity", type=int)
    p_abs.add_argument("--closed", action="store_true")
    p_abs.add_argument("--provider",
                       help="external gradient provider command (shell-style string)")
    _add_common(p_abs)

    p_areas = sub.add_parser("areas", help="quantized closed-area abstraction")
    p_areas.add_argument("--target", required=True)
    p_areas.add_argument("--saliency",
                         help="grayscale saliency PNG (defaults to target darkness)")
    p_areas.add_argument("--palette", help='hex colors "#rrggbb,#rrggbb,..."')
    p_areas.add_argument("--style", help="image to extract the palette from")
    p_areas.add_argument("--k", type=int, help="palette size for extraction")
    p_areas.add_argument("--areas", type=int, dest="areas")
    _add_common(p_areas)

    p_render = sub.add_parser("render", help="rasterize a saved scene")
    p_render.add_argument("--scene", required=True)
    p_render.add_argument("--out", required=True)
    p_render.add_argument("--samples", type=int, default=8)

    p_export = sub.add_parser("export", help="export a saved scene as SVG")
    p_export.add_argument("--scene", required=True)
    p_export.add_argument("--out", required=True)
    return parser


def _merge_config(args) -> dict:
    cfg = load_config(args.config) if args.config else default_config()
    over = {
        ("job", "steps"): args.steps,
        ("job", "seed"): args.seed,
        ("job", "keypoints"): args.keypoints,
        ("job", "target_opacity"): args.target_opacity,
        ("job", "width_init"): args.width_init,
        ("spline", "degree"): args.degree,
        ("losses", "smooth"): args.lambda_smooth,
        ("losses", "box"): args.lambda_box,
        ("losses", "repul"): args.lambda_repul,
        ("losses", "coverage"): args.lambda_coverage,
        ("losses", "balance"): args.lambda_balance,
    }
    for (section, key), value in over.items():
        if value is not None:
            cfg[section][key] = value
    for attr, (section, key) in {
        "multiplicity": ("job", "multiplicity"),
        "closed": ("job", "closed"),
        "areas": ("job", "areas"),
        "k": ("palette", "k"),
    }.items():
        value = getattr(args, attr, None)
        if value:
            cfg[section][key] = value
    return cfg


def _weights(cfg, **overrides) -> LossWeights:
    values = dict(cfg["losses"])
    values.update(overrides)
    return LossWeights(**values)


def _load_target(path, channels):
    img = read_png(path)
    if channels == 1 and img.shape[2] != 1:
        img = img.mean(axis=2, keepdims=True)
    if channels == 3 and img.shape[2] == 1:
        img = np.repeat(img, 3, axis=2)
    if channels == 3 and img.shape[2] == 4:
        img = img[:, :, :3]
    return img


def _stroke_job(args, cfg, multiplicity=1, provider=None) -> OptimJob:
    target = _load_target(args.target, channels=1)
    h, w = target.shape[:2]
    rng = np.random.default_rng(cfg["job"]["seed"])
    density = density_from_image(target[:, :, 0]) * cfg["job"]["target_opacity"]
    if density.sum() <= 0:
        density = np.ones_like(density)
    pts = voronoi_stipple(density, cfg["job"]["keypoints"], rng)
    order = tsp_path(pts, open_path=not cfg["job"]["closed"])
    kp = np.column_stack(
        [pts[order], np.full(len(pts), cfg["job"]["width_init"])]
    )
    path = KeyPointPath(
        kp,
        closed=cfg["job"]["closed"],
        degree=cfg["spline"]["degree"],
        multiplicities=np.full(len(kp), multiplicity, dtype=int),
    )
    scene = Scene(
        [ScenePath(path, "stroke", color=np.zeros(1))], w, h, channels=1
    )
    weights = _weights(cfg, repul=0.0)
    return OptimJob(
        scene=scene,
        target=target,
        weights=weights,
        steps=cfg["job"]["steps"],
        seed=cfg["job"]["seed"],
        target_opacity=cfg["job"]["target_opacity"],
        samples_per_segment=cfg["spline"]["samples_per_span"],
        smooth_order=cfg["smoothing"]["order"],
        smooth_mode=cfg["smoothing"]["mode"],
        pyramid_levels=_levels(cfg, h, w),
        provider_command=provider,
        raster=RasterSettings(
            aa_band=cfg["raster"]["aa_band"], smin_tau=cfg["raster"]["smin_tau"]
        ),
        **_engine_kwargs(cfg),
    )


def _engine_kwargs(cfg):
    eng = cfg["engine"]
    return dict(
        lr_positions=eng["lr_positions"],
        lr_widths=eng["lr_widths"],
        lr_colors=eng["lr_colors"],
        lr_logits=eng["lr_logits"],
        lr_min=eng["lr_min"],
        width_min=eng["width_min"],
        width_max=eng["width_max"],
    )


def _levels(cfg, h, w):
    levels = cfg["engine"]["pyramid_levels"]
    max_levels = int(np.log2(max(min(h, w), 1))) + 1
    return max(1, min(levels, max_levels))


def _areas_job(args, cfg) -> OptimJob:
    target = _load_target(args.target, channels=3)
    h, w = target.shape[:2]
    rng = np.random.default_rng(cfg["job"]["seed"])
    if args.saliency:
        saliency = read_png(args.saliency)
        saliency = saliency.mean(axis=2)
    else:
        saliency = density_from_image(target)
    if args.palette:
        palette = parse_hex_palette(args.palette)
    elif cfg["palette"]["colors"]:
        palette = parse_hex_palette(cfg["palette"]["colors"])
    else:
        style = read_png(args.style) if args.style else target
        palette = kmeans_palette(style, cfg["palette"]["k"], rng)
    paths, _ = area_seeds(
        saliency, cfg["job"]["areas"], rng, degree=cfg["spline"]["degree"]
    )
    k = len(palette)
    scene_paths = [
        ScenePath(
            p,
            kind="fill",
            color=np.zeros(3),
            logits=0.01 * rng.normal(size=k),
        )
        for p in paths
    ]
    scene = Scene(scene_paths, w, h, channels=3, background=[1.0, 1.0, 1.0],
                  palette=palette)
    return OptimJob(
        scene=scene,
        target=target,
        weights=_weights(cfg),
        steps=cfg["job"]["steps"],
        seed=cfg["job"]["seed"],
        target_opacity=cfg["job"]["target_opacity"],
        samples_per_segment=cfg["spline"]["samples_per_span"],
        smooth_order=cfg["smoothing"]["order"],
        smooth_mode=cfg["smoothing"]["mode"],
        pyramid_levels=_levels(cfg, h, w),
        gumbel_beta=cfg["palette"]["gumbel_beta"],
        tau_start=cfg["palette"]["tau_start"],
        tau_end=cfg["palette"]["tau_end"],
        optimize_widths=False,
        raster=RasterSettings(
            aa_band=cfg["raster"]["aa_band"], smin_tau=cfg["raster"]["smin_tau"]
        ),
        **_engine_kwargs(cfg),
    )


def _run_and_save(args, job):
    out = Path(args.out) if args.out else Path(args.target).with_suffix(".out.svg")
    if args.trace:
        job.trace_path = args.trace
    else:
        job.trace_path = str(out.with_suffix(".trace.csv"))
    result = run(job)
    save_scene(result.scene, out)
    if args.png:
        write_png(args.png, result.canvas)
    if args.report:
        from .report import write_report

        write_report(
            result,
            out.with_suffix(".report.png"),
            target=job.target,
            title=f"{args.command} ({job.steps} steps, seed {job.seed})",
        )
    print(f"wrote {out} (trace: {job.trace_path})")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "fill":
            cfg = _merge_config(args)
            return _run_and_save(args, _stroke_job(args, cfg))
        if args.command == "abstract":
            import shlex

            cfg = _merge_config(args)
            job = _stroke_job(
                args,
                cfg,
                multiplicity=cfg["job"]["multiplicity"],
                provider=shlex.split(args.provider) if args.provider else None,
            )
            return _run_and_save(args, job)
        if args.command == "areas":
            cfg = _merge_config(args)
            return _run_and_save(args, _areas_job(args, cfg))
        if args.command == "render":
            scene = load_scene(args.scene)
            canvas = render_scene(scene, samples_per_segment=args.samples)
            write_png(args.out, canvas.pixels)
            print(f"wrote {args.out}")
            return 0
        if args.command == "export":
            scene = load_scene(args.scene)
            Path(args.out).write_text(export_svg(scene))
            print(f"wrote {args.out}")
            return 0
    except (ConfigError, EngineAbort) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
