"""Command-line interface.

Exit codes: 0 success, 1 unexpected failure, 2 configuration problems
(including missing input files), 3 optimization divergence.
"""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path

import click
import numpy as np
import torch

from . import fileio
from .camera import DEFAULT_FOV, intrinsics_from_fov
from .errors import ConfigError, DivergenceError
from .metrics import evaluate_depth
from .pipeline import manipulate
from .run import execute_run, load_run_config
from .scenes import make_scene
from .shading import Lighting

EXIT_CONFIG = 2
EXIT_DIVERGED = 3


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _set_threads(threads: int | None) -> None:
    if threads is not None:
        if threads < 1:
            _fail(EXIT_CONFIG, "threads must be >= 1")
        torch.set_num_threads(threads)


@click.group()
def main():
    """Single-image shape refinement against an image manifold."""


@main.command()
@click.argument("name")
@click.option("--size", default=64, show_default=True, help="Image width and height.")
@click.option("--out", "out_dir", required=True, type=click.Path(), help="Output directory.")
@click.option("--fov", default=math.degrees(DEFAULT_FOV), show_default=True,
              help="Horizontal field of view in degrees.")
def synth(name, size, out_dir, fov):
    """Generate a built-in synthetic scene (image, mask, ground truth)."""
    try:
        scene = make_scene(name, size, size, math.radians(fov))
    except ValueError as e:
        _fail(EXIT_CONFIG, str(e))
    out = Path(out_dir)
    fileio.write_png(out / "image.png", scene.image)
    fileio.write_png(out / "mask.png", scene.mask.astype(np.float64))
    fileio.write_pfm(out / "depth_gt.pfm", scene.depth)
    fileio.write_png(out / "albedo_gt.png", scene.albedo)
    meta = {
        "scene": name,
        "size": size,
        "fov_degrees": fov,
        "lighting": [float(x) for x in scene.lighting.as_array()],
    }
    fileio.write_json(out / "scene.json", json.dumps(meta, indent=2))
    click.echo(f"wrote scene '{name}' to {out}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(),
              help="JSON run configuration.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Override the output directory.")
@click.option("--threads", type=int, default=None, envvar="PHOTOGEO_THREADS",
              help="Torch thread count (env: PHOTOGEO_THREADS).")
def run(config_path, seed, out_dir, threads):
    """Run the multi-stage refinement described by a config file."""
    try:
        rc = load_run_config(config_path)
        if seed is not None:
            rc.seed = seed
        _set_threads(threads if threads is not None else rc.threads)
        result = execute_run(rc, out_dir)
    except ConfigError as e:
        _fail(EXIT_CONFIG, str(e))
    except DivergenceError as e:
        _fail(EXIT_DIVERGED, str(e))
    final = result.snapshots[-1]
    line = f"done: {len(result.snapshots) - 1} stage(s)"
    if final.metrics is not None:
        line += f", side={final.metrics.side:.3f} mad={final.metrics.mad:.2f}"
    click.echo(line)


@main.command("eval")
@click.argument("pred", type=click.Path())
@click.argument("gt", type=click.Path())
@click.option("--mask", "mask_path", type=click.Path(), default=None,
              help="Foreground mask (PNG).")
@click.option("--fov", default=math.degrees(DEFAULT_FOV), show_default=True,
              help="FOV in degrees used to derive normals.")
def eval_cmd(pred, gt, mask_path, fov):
    """Compare a predicted depth PFM against a ground-truth depth PFM."""
    for p in (pred, gt, mask_path):
        if p is not None and not Path(p).exists():
            _fail(EXIT_CONFIG, f"file not found: {p}")
    d_pred = np.asarray(fileio.read_pfm(pred), dtype=np.float64)
    d_gt = np.asarray(fileio.read_pfm(gt), dtype=np.float64)
    if d_pred.ndim != 2 or d_gt.ndim != 2:
        _fail(EXIT_CONFIG, "eval expects single-channel depth PFMs")
    if d_pred.shape != d_gt.shape:
        _fail(EXIT_CONFIG, f"depth shapes disagree: {d_pred.shape} vs {d_gt.shape}")
    mask = fileio.read_mask(mask_path) if mask_path else None
    K = intrinsics_from_fov(d_pred.shape[1], d_pred.shape[0], math.radians(fov))
    try:
        report = evaluate_depth(d_pred, d_gt, K, mask=mask)
    except ValueError as e:
        _fail(EXIT_CONFIG, str(e))
    click.echo(report.to_json())


def _load_state(state_dir: str):
    state = Path(state_dir)
    depth_path = state / "depth.pfm"
    albedo_path = state / "albedo.png"
    for p in (depth_path, albedo_path):
        if not p.exists():
            _fail(EXIT_CONFIG, f"state directory is missing {p.name}: {p}")
    depth = np.asarray(fileio.read_pfm(depth_path), dtype=np.float64)
    albedo = fileio.read_png(albedo_path)
    lighting = Lighting()
    state_json = state / "state.json"
    if state_json.exists():
        with open(state_json) as fh:
            meta = json.load(fh)
        if "lighting" in meta:
            lighting = Lighting.from_array(meta["lighting"])
    return depth, albedo, lighting


def _write_frames(frames, out_dir, prefix):
    out = Path(out_dir)
    for i, frame in enumerate(frames):
        fileio.write_png(out / f"{prefix}_{i:03d}.png", frame)
    click.echo(f"wrote {len(frames)} frame(s) to {out}")


@main.command()
@click.argument("state_dir", type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--ry", default=0.0, show_default=True, help="Yaw in degrees.")
@click.option("--rx", default=0.0, help="Pitch in degrees.")
@click.option("--rz", default=0.0, help="Roll in degrees.")
@click.option("--lx", type=float, default=None, help="Override light lx.")
@click.option("--ly", type=float, default=None, help="Override light ly.")
@click.option("--fov", default=math.degrees(DEFAULT_FOV), show_default=True)
def render(state_dir, out_dir, ry, rx, rz, lx, ly, fov):
    """Re-render a recovered state under a chosen viewpoint/lighting."""
    depth, albedo, lighting = _load_state(state_dir)
    if lx is not None or ly is not None:
        lighting = Lighting(
            lx if lx is not None else lighting.lx,
            ly if ly is not None else lighting.ly,
            lighting.ks,
            lighting.kd,
        )
    from .rendering import render as render_once
    from .camera import Viewpoint

    K = intrinsics_from_fov(depth.shape[1], depth.shape[0], math.radians(fov))
    try:
        out = render_once(
            depth, albedo,
            Viewpoint(rx=math.radians(rx), ry=math.radians(ry), rz=math.radians(rz)),
            lighting, K,
        )
    except ValueError as e:
        _fail(EXIT_CONFIG, str(e))
    _write_frames([np.clip(out.image.numpy(), 0.0, 1.0)], out_dir, "render")


@main.command()
@click.argument("state_dir", type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--frames", default=20, show_default=True)
@click.option("--extent", default=20.0, show_default=True, help="Max |yaw| in degrees.")
@click.option("--fov", default=math.degrees(DEFAULT_FOV), show_default=True)
def rotate(state_dir, out_dir, frames, extent, fov):
    """Render a yaw sweep (default -20..20 degrees) of a recovered state."""
    depth, albedo, lighting = _load_state(state_dir)
    K = intrinsics_from_fov(depth.shape[1], depth.shape[0], math.radians(fov))
    angles = np.radians(np.linspace(-extent, extent, frames))
    imgs = manipulate(depth, albedo, lighting, K, "rotate", angles)
    _write_frames(imgs, out_dir, "rotate")


@main.command()
@click.argument("state_dir", type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--frames", default=20, show_default=True)
@click.option("--lx", nargs=2, type=float, default=(-0.9, 0.9), show_default=True,
              help="Light lx sweep range.")
@click.option("--ly", nargs=2, type=float, default=(0.2, 0.2), show_default=True,
              help="Light ly sweep range.")
@click.option("--fov", default=math.degrees(DEFAULT_FOV), show_default=True)
def relight(state_dir, out_dir, frames, lx, ly, fov):
    """Render a lighting sweep of a recovered state."""
    depth, albedo, lighting = _load_state(state_dir)
    K = intrinsics_from_fov(depth.shape[1], depth.shape[0], math.radians(fov))
    pts = np.stack(
        [np.linspace(lx[0], lx[1], frames), np.linspace(ly[0], ly[1], frames)], axis=1
    )
    imgs = manipulate(depth, albedo, lighting, K, "relight", pts)
    _write_frames(imgs, out_dir, "relight")


if __name__ == "__main__":
    main()
