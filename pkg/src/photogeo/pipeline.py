"""Iterative shape refinement from a single image.

Each stage runs three steps:

1. fit the canonical albedo to the input image under the current shape and
   base lighting;
2. render pseudo-views of the current shape under sampled viewpoints and
   lighting offsets, and project each onto the image manifold;
3. jointly refine depth, albedo, and the per-sample viewpoints/lightings
   against the projected views (the input image rides along as one more
   sample), with a second-order smoothness penalty on depth.

Later stages restart sampling from the refined shape, so the pseudo-views
gain parallax and shading variation as the shape improves.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import torch

from .camera import (
    ROT_BOUND,
    TRANS_BOUND,
    CameraIntrinsics,
    _as_tensor,
    compute_normals,
    depth_from_raw,
    intrinsics_from_fov,
    raw_from_depth,
    DEFAULT_FOV,
)
from .errors import DivergenceError
from .manifold import ProjectionResult
from .metrics import EvalReport, evaluate_depth
from .priors import PriorSpec, build_prior
from .rendering import RenderOutput, render_batch
from .sampling import (
    LightingDistribution,
    SeedPolicy,
    ViewpointDistribution,
    sample_lightings,
    sample_viewpoints,
)
from .shading import (
    CANONICAL_LIGHTING,
    albedo_from_raw,
    apply_lighting_offset,
    lighting_values_from_raw,
    raw_from_albedo,
    raw_from_lighting_values,
)

logger = logging.getLogger(__name__)

# disjoint-window size for the guarded-descent check on Step-3 loss curves
DESCENT_WINDOW = 50


@dataclass
class StageConfig:
    """Per-stage iteration budget and loss weights."""

    samples: int = 32  # pseudo-views per stage (m)
    iters1: int = 350  # step-1 albedo-fit iterations
    iters2: int = 250  # step-2 projection fit budget
    iters3: int = 200  # step-3 joint refinement iterations
    lr: float = 0.01
    smoothness_weight: float = 0.01
    projector_weight: float = 0.01  # kept for replay parity; unused by the oracle
    pyramid_weight: float = 0.5
    symmetry: bool = False

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError(f"samples must be >= 1, got {self.samples}")
        for name in ("iters1", "iters2", "iters3"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative, got {getattr(self, name)}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")


@dataclass
class PipelineConfig:
    """Full configuration of a refinement run."""

    stages: list[StageConfig]
    prior: PriorSpec = field(default_factory=PriorSpec)
    view_dist: ViewpointDistribution = field(default_factory=ViewpointDistribution)
    light_dist: LightingDistribution = field(default_factory=LightingDistribution)
    seed: int = 0
    fov: float = DEFAULT_FOV
    background: float = 0.5
    optimizer: str = "adam"  # "adam" or "momentum" (SGD with momentum 0.9)
    momentum: float = 0.9
    dtype: str = "float32"

    def __post_init__(self):
        if len(self.stages) < 1:
            raise ValueError("stages must be >= 1")
        if self.optimizer not in ("adam", "momentum"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype!r}")

    @property
    def torch_dtype(self) -> torch.dtype:
        return torch.float32 if self.dtype == "float32" else torch.float64


def default_stages(
    n_stages: int = 4, samples: int = 32, symmetry: str = "off", **overrides
) -> list[StageConfig]:
    """The default iteration schedule.

    Stage 1 gets the long budget (350/350/300); later stages run shorter
    (100/250/200) since they start from a refined shape.  ``symmetry`` is
    one of "off", "on", or "first-stage" (mirror sharing during stage 1
    only, dropped afterwards).
    """
    if n_stages < 1:
        raise ValueError("stages must be >= 1")
    if symmetry not in ("off", "on", "first-stage"):
        raise ValueError(f"unknown symmetry mode {symmetry!r}")
    stages = []
    for s in range(1, n_stages + 1):
        iters = dict(iters1=350, iters2=350, iters3=300) if s == 1 else dict(
            iters1=100, iters2=250, iters3=200
        )
        iters.update(overrides)
        sym = symmetry == "on" or (symmetry == "first-stage" and s == 1)
        stages.append(StageConfig(samples=samples, symmetry=sym, **iters))
    return stages


def mirror_expand(half: torch.Tensor, width: int) -> torch.Tensor:
    """Expand parameters stored for columns [0, ceil(W/2)) to full width.

    Column j >= ceil(W/2) is an exact copy of column W-1-j, so the result
    is bitwise mirror-symmetric.  Works on (..., H, Wh) or (..., H, Wh, C)
    with ``column_dim`` inferred from the trailing channel dimension.
    """
    dim = -1 if half.dim() == 2 else -2
    half_w = half.shape[dim]
    if half_w != (width + 1) // 2:
        raise ValueError(f"half width {half_w} does not match full width {width}")
    mirrored = half.narrow(dim, 0, width - half_w).flip(dim)
    return torch.cat([half, mirrored], dim=dim)


def mirror_fold(full: torch.Tensor, width: int) -> torch.Tensor:
    """Average a full-width map with its mirror and keep the left half."""
    dim = -1 if full.dim() == 2 else -2
    if full.shape[dim] != width:
        raise ValueError(f"expected width {width}, got {full.shape[dim]}")
    sym = 0.5 * (full + full.flip(dim))
    return sym.narrow(dim, 0, (width + 1) // 2).contiguous()


@dataclass
class SampleRecord:
    """A reconstruction target for Step 3."""

    target: np.ndarray  # (H, W, C) image to reconstruct
    hint_v: np.ndarray  # (6,) viewpoint initialization
    hint_l: np.ndarray  # (4,) lighting values initialization
    mask: np.ndarray | None  # (H, W) weights in [0, 1] in the sample's frame
    converged: bool = True
    residual: float = 0.0
    is_original: bool = False


@dataclass
class StageSnapshot:
    """State exported after a stage (stage 0 is the prior initialization)."""

    stage: int
    depth: np.ndarray  # (H, W) float64
    normals: np.ndarray  # (H, W, 3)
    albedo: np.ndarray  # (H, W, 3)
    recon: np.ndarray  # (H, W, 3) canonical render, clipped to [0, 1]
    lighting: np.ndarray  # (4,) base lighting values
    losses: list[float] = field(default_factory=list)
    metrics: EvalReport | None = None


class InstanceState:
    """Optimization state for one image instance.

    Depth and albedo are stored as unconstrained raw parameters; when
    ``symmetry`` is on, only the left half of the columns is stored and the
    right half is produced by exact mirroring, so symmetric output is a
    property of the parameterization rather than a penalty.
    """

    def __init__(
        self,
        depth_init: np.ndarray,
        height: int,
        width: int,
        symmetry: bool = False,
        dtype: torch.dtype = torch.float32,
        albedo_init: float = 0.5,
    ):
        self.height = height
        self.width = width
        self.symmetry = symmetry
        self.dtype = dtype
        self.stage = 0
        d_raw = raw_from_depth(_as_tensor(depth_init).to(dtype))
        a_raw = raw_from_albedo(
            torch.full((height, width, 3), albedo_init, dtype=dtype)
        )
        if symmetry:
            d_raw = mirror_fold(d_raw, width)
            a_raw = mirror_fold(a_raw, width)
        self.depth_param = d_raw.clone().requires_grad_(True)
        self.albedo_param = a_raw.clone().requires_grad_(True)
        self.base_lighting = CANONICAL_LIGHTING.as_array()
        self.sample_viewpoints: np.ndarray | None = None
        self.sample_lightings: np.ndarray | None = None

    def depth_raw(self) -> torch.Tensor:
        if self.symmetry:
            return mirror_expand(self.depth_param, self.width)
        return self.depth_param

    def albedo_raw(self) -> torch.Tensor:
        if self.symmetry:
            return mirror_expand(self.albedo_param, self.width)
        return self.albedo_param

    def depth(self) -> torch.Tensor:
        return depth_from_raw(self.depth_raw())

    def albedo(self) -> torch.Tensor:
        return albedo_from_raw(self.albedo_raw())

    def set_symmetry(self, symmetry: bool) -> None:
        """Re-pack parameters when the symmetry mode changes between stages."""
        if symmetry == self.symmetry:
            return
        with torch.no_grad():
            d = self.depth_raw()
            a = self.albedo_raw()
            if symmetry:
                d = mirror_fold(d, self.width)
                a = mirror_fold(a, self.width)
        self.symmetry = symmetry
        self.depth_param = d.detach().clone().requires_grad_(True)
        self.albedo_param = a.detach().clone().requires_grad_(True)


def recon_loss(target, rendered, mask=None, pyramid_weight: float = 0.5):
    """Masked photometric distance between a target image and a render.

    Mean L1 over valid pixels plus ``pyramid_weight`` times coarse L1 terms
    at 2x and 4x average-pooled resolution.  Valid pixels are those covered
    by the render (detached hard mask) intersected with ``mask``; pixels
    outside contribute nothing to the value or the gradient.

    ``rendered`` may be a RenderOutput or a plain image tensor (full
    coverage assumed).  Returns a scalar tensor.
    """
    if isinstance(rendered, RenderOutput):
        image, coverage = rendered.image, rendered.coverage
    else:
        image, coverage = _as_tensor(rendered), None
    t = _as_tensor(target).to(image.dtype)
    if t.shape != image.shape:
        raise ValueError(f"target shape {tuple(t.shape)} != render shape {tuple(image.shape)}")
    w = torch.ones(image.shape[:2], dtype=image.dtype)
    if coverage is not None:
        w = w * coverage.detach()
    if mask is not None:
        w = w * _as_tensor(mask).to(image.dtype)
    losses = _recon_loss_batch(
        t.unsqueeze(0), image.unsqueeze(0), w.unsqueeze(0), pyramid_weight
    )
    return losses[0]


def _recon_loss_batch(
    targets: torch.Tensor,
    images: torch.Tensor,
    weights: torch.Tensor,
    pyramid_weight: float,
) -> torch.Tensor:
    """Vectorized recon_loss over a batch: (B,H,W,C)x2, weights (B,H,W) -> (B,)."""
    B, H, W, C = images.shape
    wsum = weights.sum(dim=(1, 2))
    if (wsum <= 0).any():
        raise ValueError("a reconstruction target has no valid pixels")
    wx = weights.unsqueeze(-1)
    full = (wx * (images - targets).abs()).sum(dim=(1, 2, 3)) / (wsum * C)
    total = full
    if pyramid_weight > 0.0:
        # NCHW for pooling
        aw = (targets * wx).permute(0, 3, 1, 2)
        bw = (images * wx).permute(0, 3, 1, 2)
        wn = weights.unsqueeze(1)
        for s in (2, 4):
            if H < s or W < s:
                continue
            pa = torch.nn.functional.avg_pool2d(aw, s)
            pb = torch.nn.functional.avg_pool2d(bw, s)
            pw = torch.nn.functional.avg_pool2d(wn, s)
            level = (pa - pb).abs().sum(dim=(1, 2, 3)) / (pw.sum(dim=(1, 2, 3)) * C)
            total = total + pyramid_weight * level
    return total


def smoothness_loss(depth):
    """Mean absolute second difference of depth along rows and columns.

    All interior second differences along i and j are pooled into one mean;
    a direction shorter than 3 pixels simply contributes none.
    """
    d = _as_tensor(depth)
    if d.dim() != 2:
        raise ValueError(f"depth must be (H, W), got shape {tuple(d.shape)}")
    H, W = d.shape
    diffs = []
    if W >= 3:
        diffs.append((d[:, 2:] - 2.0 * d[:, 1:-1] + d[:, :-2]).reshape(-1))
    if H >= 3:
        diffs.append((d[2:, :] - 2.0 * d[1:-1, :] + d[:-2, :]).reshape(-1))
    if not diffs:
        raise ValueError("depth map needs at least 3 pixels along one axis")
    return torch.cat(diffs).abs().mean()


def _make_optimizer(cfg: PipelineConfig, groups, lr: float):
    if cfg.optimizer == "adam":
        return torch.optim.Adam(groups, lr=lr)
    return torch.optim.SGD(groups, lr=lr, momentum=cfg.momentum)


def step1_fit_albedo(
    state: InstanceState,
    image: torch.Tensor,
    mask: torch.Tensor | None,
    stage_cfg: StageConfig,
    cfg: PipelineConfig,
    K: CameraIntrinsics,
) -> list[float]:
    """Fit the canonical albedo to the input image, shape and lighting fixed."""
    opt = _make_optimizer(cfg, [state.albedo_param], stage_cfg.lr)
    v = torch.zeros((1, 6), dtype=state.dtype)
    l = _as_tensor(state.base_lighting).to(state.dtype).reshape(1, 4)
    depth = state.depth().detach()
    history = []
    for _ in range(stage_cfg.iters1):
        opt.zero_grad()
        imgs, _, cov = render_batch(depth, state.albedo(), v, l, K, cfg.background)
        w = cov[0].detach()
        if mask is not None:
            w = w * mask
        loss = _recon_loss_batch(
            image.unsqueeze(0), imgs, w.unsqueeze(0), stage_cfg.pyramid_weight
        )[0]
        loss.backward()
        opt.step()
        history.append(loss.item())
    return history


def step2_sample_and_project(
    state: InstanceState,
    image: np.ndarray,
    mask: np.ndarray | None,
    projector,
    stage_cfg: StageConfig,
    cfg: PipelineConfig,
    K: CameraIntrinsics,
    stage: int,
    start_index: int,
) -> list[SampleRecord]:
    """Render pseudo-views, project them, and assemble Step-3 targets.

    The input image itself is appended as the last sample (hint v = 0, no
    lighting offset, unwarped mask): the original view constrains the
    canonical frame while the projected views contribute parallax and
    relighting evidence.
    """
    m = stage_cfg.samples
    seeds = SeedPolicy(cfg.seed)
    views = sample_viewpoints(cfg.view_dist, m, seeds, stage)
    offsets = sample_lightings(cfg.light_dist, m, seeds, stage)
    v_arr = np.stack([v.as_array() for v in views])
    l_arr = np.stack(
        [apply_lighting_offset(state.base_lighting, o) for o in offsets]
    )
    depth = state.depth().detach()
    albedo = state.albedo().detach()
    with torch.no_grad():
        v_t = _as_tensor(v_arr).to(state.dtype)
        l_t = _as_tensor(l_arr).to(state.dtype)
        pseudos, _, _ = render_batch(depth, albedo, v_t, l_t, K, cfg.background)
        warped_masks = None
        if mask is not None:
            mask_tex = _as_tensor(mask).to(state.dtype).reshape(1, K.height, K.width, 1)
            mimgs, _, mcov = render_batch(
                depth,
                mask_tex[0],
                v_t,
                torch.tensor([[0.0, 0.0, 1.0, 0.0]], dtype=state.dtype).expand(m, 4),
                K,
                background=0.0,
            )
            # a warped pixel's rasterized mask value mixes foreground and
            # background texels along the boundary, where the two
            # rasterizations (ours and the projector's) legitimately
            # disagree; the mixture value is kept as a soft weight so
            # boundary pixels pull weakly instead of digging grooves at
            # full strength or losing their signal entirely
            warped_masks = (mimgs[..., 0] * (mcov > 0.5)).to(torch.float64).numpy()

    if hasattr(projector, "project_batch"):
        results = projector.project_batch(
            pseudos, v_t, l_t, stage=stage, start_index=start_index
        )
    else:
        results = [
            projector.project(
                pseudos[i], v_arr[i], l_arr[i], stage=stage, index=start_index + i
            )
            for i in range(m)
        ]

    records = []
    dropped = 0
    for i, res in enumerate(results):
        rec_mask = None if warped_masks is None else warped_masks[i]
        if rec_mask is not None and float(rec_mask.sum()) < 1.0:
            # a large sampled rotation can push the whole foreground out of
            # frame, leaving less than one pixel's worth of weight; the
            # masked loss mean would then amplify a handful of unreliable
            # boundary mixtures to full strength, so drop the view instead
            dropped += 1
            continue
        records.append(
            SampleRecord(
                target=np.asarray(res.image, dtype=np.float64),
                hint_v=v_arr[i],
                hint_l=l_arr[i],
                mask=rec_mask,
                converged=res.converged,
                residual=res.residual,
            )
        )
    if dropped:
        logger.warning(
            "stage %d: dropped %d of %d sampled view(s) with empty warped masks",
            stage,
            dropped,
            m,
        )
    records.append(
        SampleRecord(
            target=np.asarray(image, dtype=np.float64),
            hint_v=np.zeros(6),
            hint_l=state.base_lighting.copy(),
            mask=None if mask is None else np.asarray(mask, dtype=bool),
            is_original=True,
        )
    )
    return records


def step3_joint_refine(
    state: InstanceState,
    records: list[SampleRecord],
    stage_cfg: StageConfig,
    cfg: PipelineConfig,
    K: CameraIntrinsics,
) -> list[float]:
    """Jointly refine shape, albedo, and per-sample viewpoint/lighting.

    Minimizes the mean of the per-sample reconstruction losses plus the
    depth smoothness penalty.  On a non-finite loss the last parameters are
    restored and the learning rate halved, once; a second failure raises
    DivergenceError.
    """
    B = len(records)
    targets = _as_tensor(np.stack([r.target for r in records])).to(state.dtype)
    masks = torch.stack(
        [
            _as_tensor(
                np.ones((state.height, state.width)) if r.mask is None else r.mask
            ).to(state.dtype)
            for r in records
        ]
    )
    v_param = _as_tensor(np.stack([r.hint_v for r in records])).to(state.dtype).clone()
    l_param = raw_from_lighting_values(
        _as_tensor(np.stack([r.hint_l for r in records])).to(state.dtype)
    ).clone()
    v_param.requires_grad_(True)
    l_param.requires_grad_(True)

    params = [state.depth_param, state.albedo_param, v_param, l_param]
    lr = stage_cfg.lr
    opt = _make_optimizer(cfg, params, lr)
    history: list[float] = []
    retried = False
    warned_empty = False
    step = 0
    while step < stage_cfg.iters3:
        backup = [p.detach().clone() for p in params]
        opt.zero_grad()
        imgs, _, cov = render_batch(
            state.depth(),
            state.albedo(),
            v_param,
            lighting_values_from_raw(l_param),
            K,
            cfg.background,
        )
        weights = cov.detach() * masks
        # depth and viewpoint drift can separate a sample's rendered
        # coverage from its warped mask; below one pixel's worth of weight
        # the masked mean would amplify boundary scraps to full strength,
        # so such samples sit out of the mean for this iteration
        valid = weights.reshape(B, -1).sum(-1) >= 1.0
        if not bool(valid.any()):
            raise DivergenceError(
                f"every sample lost its covered mask pixels at stage "
                f"{state.stage}, iteration {step}"
            )
        if bool(valid.all()):
            per_sample = _recon_loss_batch(
                targets, imgs, weights, stage_cfg.pyramid_weight
            )
        else:
            if not warned_empty:
                logger.warning(
                    "stage %d: excluding %d sample(s) whose rendered coverage "
                    "no longer overlaps their masks",
                    state.stage,
                    int((~valid).sum()),
                )
                warned_empty = True
            per_sample = _recon_loss_batch(
                targets[valid], imgs[valid], weights[valid], stage_cfg.pyramid_weight
            )
        loss = per_sample.mean() + stage_cfg.smoothness_weight * smoothness_loss(
            state.depth()
        )
        if not torch.isfinite(loss):
            if retried:
                raise DivergenceError(
                    f"step 3 diverged at stage {state.stage}, iteration {step}"
                )
            logger.warning(
                "non-finite step-3 loss at iteration %d; halving lr and retrying", step
            )
            with torch.no_grad():
                for p, b in zip(params, backup):
                    p.copy_(b)
            lr *= 0.5
            opt = _make_optimizer(cfg, params, lr)
            retried = True
            continue
        loss.backward()
        opt.step()
        with torch.no_grad():
            v_param[:, :3].clamp_(-ROT_BOUND, ROT_BOUND)
            v_param[:, 3:].clamp_(-TRANS_BOUND, TRANS_BOUND)
        history.append(loss.item())
        step += 1

    _check_descent(history, state.stage)
    with torch.no_grad():
        state.sample_viewpoints = v_param.detach().to(torch.float64).numpy()
        state.sample_lightings = (
            lighting_values_from_raw(l_param).detach().to(torch.float64).numpy()
        )
        # the refined lighting of the original sample becomes the base
        state.base_lighting = state.sample_lightings[-1].copy()
    return history


def _check_descent(history: list[float], stage: int) -> list[int]:
    """Log any disjoint 50-step window whose mean loss increased."""
    violations = []
    means = [
        float(np.mean(history[k : k + DESCENT_WINDOW]))
        for k in range(0, len(history) - DESCENT_WINDOW + 1, DESCENT_WINDOW)
    ]
    for i in range(1, len(means)):
        if means[i] > means[i - 1] + 1e-9:
            violations.append(i * DESCENT_WINDOW)
            logger.warning(
                "stage %d: step-3 loss window mean rose at iteration %d "
                "(%.6f -> %.6f)",
                stage,
                i * DESCENT_WINDOW,
                means[i - 1],
                means[i],
            )
    return violations


@dataclass
class RunResult:
    state: InstanceState
    snapshots: list[StageSnapshot]
    sample_records: list[SampleRecord] = field(default_factory=list)


def _snapshot(
    state: InstanceState,
    stage: int,
    cfg: PipelineConfig,
    K: CameraIntrinsics,
    losses: list[float],
    gt_depth: np.ndarray | None,
    mask: np.ndarray | None,
    image: np.ndarray,
) -> StageSnapshot:
    with torch.no_grad():
        depth = state.depth().detach().to(torch.float64).numpy()
        albedo = state.albedo().detach().to(torch.float64).numpy()
        l = _as_tensor(state.base_lighting).reshape(1, 4)
        v0 = torch.zeros((1, 6), dtype=torch.float64)
        imgs, _, _ = render_batch(
            _as_tensor(depth), _as_tensor(albedo), v0, l, K, cfg.background
        )
        recon = np.clip(imgs[0].numpy(), 0.0, 1.0)
    normals = compute_normals(depth, K)
    report = None
    if gt_depth is not None:
        report = evaluate_depth(
            depth, gt_depth, K, mask=mask, image_pred=recon, image_gt=image
        )
    return StageSnapshot(
        stage=stage,
        depth=depth,
        normals=normals,
        albedo=albedo,
        recon=recon,
        lighting=state.base_lighting.copy(),
        losses=losses,
        metrics=report,
    )


def run_pipeline(
    image,
    config: PipelineConfig,
    projector,
    mask=None,
    gt_depth=None,
) -> RunResult:
    """Run the full multi-stage refinement on one image.

    Args:
        image: (H, W, 3) float image in [0, 1].
        config: pipeline configuration.
        projector: manifold projector (``project`` / ``project_batch``).
        mask: optional (H, W) foreground mask; reconstruction losses are
            restricted to it (warped per sample) and the prior is placed
            from its bounding box.
        gt_depth: optional ground truth; enables per-stage metrics.

    Returns a RunResult with the final state and one snapshot per stage
    (snapshot 0 is the prior initialization).
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"image must be (H, W, 3), got shape {image.shape}")
    H, W = image.shape[:2]
    K = intrinsics_from_fov(W, H, config.fov)
    if mask is not None:
        mask = np.asarray(mask).astype(bool)
        if mask.shape != (H, W):
            raise ValueError(f"mask shape {mask.shape} does not match image {(H, W)}")
    if gt_depth is not None:
        gt_depth = np.asarray(gt_depth, dtype=np.float64)

    prior_depth = build_prior(config.prior, W, H, mask=mask)
    state = InstanceState(
        prior_depth, H, W, symmetry=config.stages[0].symmetry, dtype=config.torch_dtype
    )
    image_t = _as_tensor(image).to(state.dtype)
    mask_t = None if mask is None else _as_tensor(mask.astype(np.float64)).to(state.dtype)

    snapshots = [_snapshot(state, 0, config, K, [], gt_depth, mask, image)]
    records: list[SampleRecord] = []
    sample_counter = 0
    for stage_idx, stage_cfg in enumerate(config.stages, start=1):
        state.set_symmetry(stage_cfg.symmetry)
        state.stage = stage_idx
        step1_fit_albedo(state, image_t, mask_t, stage_cfg, config, K)
        records = step2_sample_and_project(
            state, image, mask, projector, stage_cfg, config, K, stage_idx, sample_counter
        )
        sample_counter += stage_cfg.samples
        losses = step3_joint_refine(state, records, stage_cfg, config, K)
        snapshots.append(
            _snapshot(state, stage_idx, config, K, losses, gt_depth, mask, image)
        )
    return RunResult(state=state, snapshots=snapshots, sample_records=records)


def manipulate(
    depth,
    albedo,
    lighting,
    K: CameraIntrinsics,
    mode: str,
    values,
    background: float = 0.5,
) -> list[np.ndarray]:
    """Re-render a recovered scene under new viewpoints or lighting.

    ``mode`` is "rotate" (values: yaw angles in radians) or "relight"
    (values: (lx, ly) pairs; strengths keep their recovered values).
    Returns a list of (H, W, 3) images clipped to [0, 1].
    """
    l = np.asarray(
        lighting.as_array() if hasattr(lighting, "as_array") else lighting, dtype=np.float64
    )
    if mode == "rotate":
        vs = np.zeros((len(values), 6))
        vs[:, 1] = np.asarray(values, dtype=np.float64)
        ls = np.tile(l, (len(values), 1))
    elif mode == "relight":
        pts = np.asarray(values, dtype=np.float64).reshape(-1, 2)
        vs = np.zeros((len(pts), 6))
        ls = np.tile(l, (len(pts), 1))
        ls[:, :2] = pts
    else:
        raise ValueError(f"unknown manipulation mode {mode!r}")
    with torch.no_grad():
        imgs, _, _ = render_batch(
            _as_tensor(depth), _as_tensor(albedo), _as_tensor(vs), _as_tensor(ls), K, background
        )
    return [np.clip(im.numpy(), 0.0, 1.0) for im in imgs]
