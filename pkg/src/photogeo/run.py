"""Run configuration (strict JSON) and artifact-producing execution."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fileio
from .camera import DEFAULT_FOV, intrinsics_from_fov
from .errors import ConfigError
from .manifold import OracleProjector, ReplayProjector
from .pipeline import PipelineConfig, RunResult, StageConfig, default_stages, run_pipeline
from .priors import PriorSpec
from .sampling import LightingDistribution, SeedPolicy, ViewpointDistribution
from .scenes import make_scene
from .validation import check_image, check_mask

_STAGE_OVERRIDE_KEYS = {
    "samples", "iters1", "iters2", "iters3", "lr",
    "smoothness_weight", "projector_weight", "pyramid_weight", "symmetry",
}


@dataclass
class RunConfig:
    """Validated run description; paths are absolute after loading."""

    seed: int = 0
    out: Path | None = None
    image: Path | None = None
    mask: Path | None = None
    gt_depth: Path | None = None
    stages: int = 4
    samples: int = 32
    symmetry: str = "off"
    optimizer: str = "adam"
    learning_rate: float = 0.01
    smoothness_weight: float = 0.01
    projector_weight: float = 0.01
    pyramid_weight: float = 0.5
    background: float = 0.5
    fov_degrees: float = math.degrees(DEFAULT_FOV)
    dtype: str = "float32"
    threads: int | None = None
    prior: PriorSpec = field(default_factory=PriorSpec)
    view_dist: ViewpointDistribution = field(default_factory=ViewpointDistribution)
    light_dist: LightingDistribution = field(default_factory=LightingDistribution)
    projector: str = "oracle"
    oracle_scene: str | None = "hemisphere"
    oracle_size: tuple[int, int] = (64, 64)
    oracle_depth: Path | None = None
    oracle_albedo: Path | None = None
    oracle_fit_budget: int | None = None
    oracle_noise_level: float = 0.0
    oracle_lr: float = 0.02
    replay_directory: Path | None = None
    stage_overrides: list[dict] = field(default_factory=list)


def _expect(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def _check_keys(d: dict, allowed: set[str], prefix: str = "") -> None:
    for key in d:
        if key not in allowed:
            path = f"{prefix}{key}"
            raise ConfigError(f"unknown config key '{path}'")


def _get(d: dict, key: str, types, default, prefix: str = ""):
    if key not in d or d[key] is None:
        return default
    v = d[key]
    if types is float and isinstance(v, int) and not isinstance(v, bool):
        v = float(v)
    if isinstance(types, tuple):
        ok = isinstance(v, types)
    else:
        ok = isinstance(v, types) and not (types is int and isinstance(v, bool))
    _expect(ok, f"'{prefix}{key}' has the wrong type (got {type(v).__name__})")
    return v


def _resolve_path(base: Path, value: str | None) -> Path | None:
    if value is None:
        return None
    p = Path(value)
    return p if p.is_absolute() else (base / p)


_TOP_KEYS = {
    "seed", "out", "image", "mask", "gt_depth", "stages", "samples", "symmetry",
    "optimizer", "learning_rate", "smoothness_weight", "projector_weight",
    "pyramid_weight", "background", "fov_degrees", "dtype", "threads", "prior",
    "viewpoint_distribution", "lighting_distribution", "projector", "oracle",
    "replay", "stage_overrides",
}


def run_config_from_dict(d: dict, base_dir: Path) -> RunConfig:
    """Validate a config dictionary; unknown keys or bad values raise ConfigError."""
    _expect(isinstance(d, dict), "config root must be a JSON object")
    _check_keys(d, _TOP_KEYS)
    rc = RunConfig()
    rc.seed = _get(d, "seed", int, rc.seed)
    rc.out = _resolve_path(base_dir, _get(d, "out", str, None))
    rc.image = _resolve_path(base_dir, _get(d, "image", str, None))
    rc.mask = _resolve_path(base_dir, _get(d, "mask", str, None))
    rc.gt_depth = _resolve_path(base_dir, _get(d, "gt_depth", str, None))
    rc.stages = _get(d, "stages", int, rc.stages)
    _expect(rc.stages >= 1, "stages must be >= 1")
    rc.samples = _get(d, "samples", int, rc.samples)
    _expect(rc.samples >= 1, "samples must be >= 1")
    rc.symmetry = _get(d, "symmetry", str, rc.symmetry)
    _expect(
        rc.symmetry in ("off", "on", "first-stage"),
        "symmetry must be one of 'off', 'on', 'first-stage'",
    )
    rc.optimizer = _get(d, "optimizer", str, rc.optimizer)
    _expect(rc.optimizer in ("adam", "momentum"), "optimizer must be 'adam' or 'momentum'")
    rc.learning_rate = _get(d, "learning_rate", float, rc.learning_rate)
    _expect(rc.learning_rate > 0, "learning_rate must be positive")
    rc.smoothness_weight = _get(d, "smoothness_weight", float, rc.smoothness_weight)
    rc.projector_weight = _get(d, "projector_weight", float, rc.projector_weight)
    rc.pyramid_weight = _get(d, "pyramid_weight", float, rc.pyramid_weight)
    rc.background = _get(d, "background", float, rc.background)
    rc.fov_degrees = _get(d, "fov_degrees", float, rc.fov_degrees)
    _expect(0.0 < rc.fov_degrees < 180.0, "fov_degrees must lie in (0, 180)")
    rc.dtype = _get(d, "dtype", str, rc.dtype)
    _expect(rc.dtype in ("float32", "float64"), "dtype must be 'float32' or 'float64'")
    rc.threads = _get(d, "threads", int, None)
    _expect(rc.threads is None or rc.threads >= 1, "threads must be >= 1")

    if "prior" in d and d["prior"] is not None:
        p = d["prior"]
        _expect(isinstance(p, dict), "'prior' must be an object")
        _check_keys(p, {"kind", "center", "radii", "depth_range", "shift_fraction"}, "prior.")
        try:
            rc.prior = PriorSpec(
                kind=_get(p, "kind", str, "ellipsoid", "prior."),
                center=tuple(p["center"]) if p.get("center") is not None else None,
                radii=tuple(p["radii"]) if p.get("radii") is not None else None,
                depth_range=tuple(p.get("depth_range") or (0.91, 1.02)),
                shift_fraction=_get(p, "shift_fraction", float, 1.0 / 6.0, "prior."),
            )
        except ValueError as e:
            raise ConfigError(f"prior: {e}") from e

    if "viewpoint_distribution" in d and d["viewpoint_distribution"] is not None:
        v = d["viewpoint_distribution"]
        _expect(isinstance(v, dict), "'viewpoint_distribution' must be an object")
        _check_keys(v, {"mean", "std", "cov"}, "viewpoint_distribution.")
        mean = np.asarray(v.get("mean") or np.zeros(6), dtype=float)
        if v.get("cov") is not None:
            _expect(v.get("std") is None, "viewpoint_distribution: give 'std' or 'cov', not both")
            cov = np.asarray(v["cov"], dtype=float)
        elif v.get("std") is not None:
            std = np.asarray(v["std"], dtype=float)
            _expect(std.shape == (6,), "viewpoint_distribution.std must have 6 entries")
            cov = np.diag(std**2)
        else:
            cov = ViewpointDistribution().cov
        try:
            rc.view_dist = ViewpointDistribution(mean=mean, cov=cov)
        except ValueError as e:
            raise ConfigError(f"viewpoint_distribution: {e}") from e

    if "lighting_distribution" in d and d["lighting_distribution"] is not None:
        l = d["lighting_distribution"]
        if isinstance(l, str):
            _expect(
                l in ("generic", "faces"),
                "lighting_distribution must be 'generic', 'faces', or an object",
            )
            rc.light_dist = (
                LightingDistribution.generic() if l == "generic" else LightingDistribution.faces()
            )
        else:
            _expect(isinstance(l, dict), "'lighting_distribution' must be a string or object")
            _check_keys(l, {"lx_range", "ly_range", "kd_range", "alpha"}, "lighting_distribution.")
            try:
                rc.light_dist = LightingDistribution(
                    lx_range=tuple(l.get("lx_range") or (-1.0, 1.0)),
                    ly_range=tuple(l.get("ly_range") or (-0.2, 0.8)),
                    kd_range=tuple(l.get("kd_range") or (-0.1, 0.6)),
                    alpha=_get(l, "alpha", float, -0.6, "lighting_distribution."),
                )
            except ValueError as e:
                raise ConfigError(f"lighting_distribution: {e}") from e

    rc.projector = _get(d, "projector", str, rc.projector)
    _expect(rc.projector in ("oracle", "replay"), "projector must be 'oracle' or 'replay'")

    if "oracle" in d and d["oracle"] is not None:
        o = d["oracle"]
        _expect(isinstance(o, dict), "'oracle' must be an object")
        _check_keys(
            o,
            {"scene", "size", "width", "height", "depth", "albedo", "fit_budget", "noise_level", "lr"},
            "oracle.",
        )
        rc.oracle_scene = _get(o, "scene", str, None, "oracle.")
        size = _get(o, "size", int, None, "oracle.")
        w = _get(o, "width", int, size or 64, "oracle.")
        h = _get(o, "height", int, size or 64, "oracle.")
        rc.oracle_size = (w, h)
        rc.oracle_depth = _resolve_path(base_dir, _get(o, "depth", str, None, "oracle."))
        rc.oracle_albedo = _resolve_path(base_dir, _get(o, "albedo", str, None, "oracle."))
        rc.oracle_fit_budget = _get(o, "fit_budget", int, None, "oracle.")
        rc.oracle_noise_level = _get(o, "noise_level", float, 0.0, "oracle.")
        _expect(rc.oracle_noise_level >= 0.0, "oracle.noise_level must be nonnegative")
        rc.oracle_lr = _get(o, "lr", float, rc.oracle_lr, "oracle.")

    if "replay" in d and d["replay"] is not None:
        r = d["replay"]
        _expect(isinstance(r, dict), "'replay' must be an object")
        _check_keys(r, {"directory"}, "replay.")
        rc.replay_directory = _resolve_path(base_dir, _get(r, "directory", str, None, "replay."))

    if "stage_overrides" in d and d["stage_overrides"] is not None:
        so = d["stage_overrides"]
        _expect(isinstance(so, list), "'stage_overrides' must be a list")
        _expect(
            len(so) <= rc.stages,
            f"stage_overrides has {len(so)} entries for {rc.stages} stages",
        )
        for i, entry in enumerate(so):
            _expect(isinstance(entry, dict), f"stage_overrides[{i}] must be an object")
            _check_keys(entry, _STAGE_OVERRIDE_KEYS, f"stage_overrides[{i}].")
        rc.stage_overrides = list(so)

    _validate_run_inputs(rc)
    return rc


def _validate_run_inputs(rc: RunConfig) -> None:
    """Path and cross-field checks; all failures are reported before compute."""
    if rc.projector == "oracle":
        has_scene = rc.oracle_scene is not None
        has_files = rc.oracle_depth is not None and rc.oracle_albedo is not None
        _expect(
            has_scene or has_files,
            "oracle projector needs 'oracle.scene' or both 'oracle.depth' and 'oracle.albedo'",
        )
        for key, p in (("oracle.depth", rc.oracle_depth), ("oracle.albedo", rc.oracle_albedo)):
            if p is not None and not p.exists():
                raise ConfigError(f"'{key}' file not found: {p}")
    else:
        _expect(rc.image is not None, "replay projector requires an 'image' path")
        _expect(rc.replay_directory is not None, "replay projector requires 'replay.directory'")
        if not rc.replay_directory.is_dir():
            raise ConfigError(f"'replay.directory' not found: {rc.replay_directory}")
        rp = ReplayProjector(rc.replay_directory)
        total = 0
        for s in range(rc.stages):
            samples = rc.samples
            if s < len(rc.stage_overrides) and "samples" in rc.stage_overrides[s]:
                samples = rc.stage_overrides[s]["samples"]
            total += samples
        try:
            rp.require_count(total)
        except FileNotFoundError as e:
            raise ConfigError(str(e)) from e
    for key, p in (("image", rc.image), ("mask", rc.mask), ("gt_depth", rc.gt_depth)):
        if p is not None and not p.exists():
            raise ConfigError(f"'{key}' file not found: {p}")
    if rc.image is None and not (rc.projector == "oracle" and rc.oracle_scene is not None):
        raise ConfigError("an 'image' path is required unless an oracle scene is named")


def load_run_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e
    return run_config_from_dict(d, path.parent.resolve())


def build_pipeline_config(rc: RunConfig) -> PipelineConfig:
    stages = default_stages(
        rc.stages,
        rc.samples,
        rc.symmetry,
        lr=rc.learning_rate,
        smoothness_weight=rc.smoothness_weight,
        projector_weight=rc.projector_weight,
        pyramid_weight=rc.pyramid_weight,
    )
    for i, entry in enumerate(rc.stage_overrides):
        merged = {**dataclasses.asdict(stages[i]), **entry}
        try:
            stages[i] = StageConfig(**merged)
        except ValueError as e:
            raise ConfigError(f"stage_overrides[{i}]: {e}") from e
    return PipelineConfig(
        stages=stages,
        prior=rc.prior,
        view_dist=rc.view_dist,
        light_dist=rc.light_dist,
        seed=rc.seed,
        fov=math.radians(rc.fov_degrees),
        background=rc.background,
        optimizer=rc.optimizer,
        dtype=rc.dtype,
    )


def _load_inputs(rc: RunConfig):
    """Resolve image/mask/ground-truth and the projector from the config."""
    scene = None
    if rc.projector == "oracle" and rc.oracle_scene is not None:
        w, h = rc.oracle_size
        if rc.image is not None:
            image = check_image(fileio.read_png(rc.image))
            h, w = image.shape[:2]
            scene = make_scene(rc.oracle_scene, w, h, math.radians(rc.fov_degrees))
        else:
            scene = make_scene(rc.oracle_scene, w, h, math.radians(rc.fov_degrees))
            image = scene.image
    else:
        image = check_image(fileio.read_png(rc.image))
    mask = None
    if rc.mask is not None:
        mask = check_mask(fileio.read_mask(rc.mask), image.shape[:2])
    elif scene is not None:
        mask = scene.mask
    gt_depth = None
    if rc.gt_depth is not None:
        gt_depth = np.asarray(fileio.read_pfm(rc.gt_depth), dtype=np.float64)
    elif scene is not None:
        gt_depth = scene.depth

    pcfg = build_pipeline_config(rc)
    if rc.projector == "oracle":
        if scene is not None:
            gt_d, gt_a = scene.depth, scene.albedo
        else:
            gt_d = np.asarray(fileio.read_pfm(rc.oracle_depth), dtype=np.float64)
            gt_a = check_image(fileio.read_png(rc.oracle_albedo))
        K = intrinsics_from_fov(image.shape[1], image.shape[0], pcfg.fov)
        budget = rc.oracle_fit_budget
        projector = OracleProjector(
            gt_d,
            gt_a,
            K,
            fit_budget=budget if budget is not None else pcfg.stages[0].iters2,
            noise_level=rc.oracle_noise_level,
            lr=rc.oracle_lr,
            background=rc.background,
            seeds=SeedPolicy(rc.seed),
            dtype=pcfg.torch_dtype,
        )
    else:
        projector = ReplayProjector(rc.replay_directory)
    return image, mask, gt_depth, pcfg, projector


def write_stage_artifacts(out_dir: Path, snapshot) -> None:
    """Write one stage's artifacts: depth/normals as PFM, images as PNG."""
    stage_dir = Path(out_dir) / f"stage_{snapshot.stage}"
    fileio.write_pfm(stage_dir / "depth.pfm", snapshot.depth)
    fileio.write_pfm(stage_dir / "normals.pfm", snapshot.normals)
    fileio.write_png(stage_dir / "albedo.png", snapshot.albedo)
    fileio.write_png(stage_dir / "recon.png", snapshot.recon)
    state = {
        "stage": snapshot.stage,
        "lighting": [float(x) for x in snapshot.lighting],
    }
    fileio.write_json(stage_dir / "state.json", json.dumps(state, indent=2))
    if snapshot.metrics is not None:
        fileio.write_json(stage_dir / "metrics.json", snapshot.metrics.to_json())


def execute_run(rc: RunConfig, out_dir=None) -> RunResult:
    """Run the pipeline described by a RunConfig and write artifacts."""
    out = Path(out_dir) if out_dir is not None else rc.out
    _expect(out is not None, "an output directory is required ('out' or --out)")
    image, mask, gt_depth, pcfg, projector = _load_inputs(rc)
    result = run_pipeline(image, pcfg, projector, mask=mask, gt_depth=gt_depth)
    out = Path(out)
    for snapshot in result.snapshots:
        write_stage_artifacts(out, snapshot)
    summary = {
        "seed": rc.seed,
        "stages": rc.stages,
        "samples": rc.samples,
        "projector": rc.projector,
        "final_metrics": (
            result.snapshots[-1].metrics.to_dict()
            if result.snapshots[-1].metrics is not None
            else None
        ),
    }
    fileio.write_json(out / "run.json", json.dumps(summary, indent=2))
    return result
