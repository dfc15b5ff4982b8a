"""Scikit-learn style estimator wrapping the refinement pipeline."""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .camera import DEFAULT_FOV, intrinsics_from_fov
from .pipeline import PipelineConfig, default_stages, manipulate, run_pipeline
from .priors import PriorSpec
from .sampling import LightingDistribution, ViewpointDistribution
from .validation import check_image, check_mask


class ShapeRefiner(BaseEstimator):
    """Recover shape, reflectance, and lighting from a single image.

    Fitting runs the multi-stage refinement: a prior surface is rendered
    under sampled viewpoints/lightings, the pseudo-views are projected onto
    an image manifold by ``projector``, and depth, albedo, and per-sample
    poses are optimized to reconstruct the projections.

    Parameters follow the pipeline defaults; see ``PipelineConfig``.  The
    projector is required for fitting and is treated as a hyperparameter
    (it defines which image manifold regularizes the shape).

    Attributes set by :meth:`fit`:

    * ``depth_`` — (H, W) refined depth map.
    * ``albedo_`` — (H, W, 3) canonical reflectance.
    * ``normals_`` — (H, W, 3) unit surface normals.
    * ``lighting_`` — (4,) recovered lighting values (lx, ly, ks, kd).
    * ``snapshots_`` — per-stage snapshots (index 0 is the prior).
    * ``camera_`` — intrinsics used during fitting.

    Examples
    --------
    >>> from photogeo import make_scene
    >>> from photogeo.manifold import OracleProjector
    >>> sc = make_scene("hemisphere", 32, 32)
    >>> proj = OracleProjector.from_scene(sc, fit_budget=30)
    >>> r = ShapeRefiner(stages=1, samples_per_stage=4, projector=proj,
    ...                  iters=(30, 30, 30))
    >>> depth = r.fit_transform(sc.image, mask=sc.mask)
    >>> depth.shape
    (32, 32)
    """

    def __init__(
        self,
        stages: int = 4,
        samples_per_stage: int = 32,
        projector=None,
        symmetry: str = "off",
        seed: int = 0,
        fov: float = DEFAULT_FOV,
        optimizer: str = "adam",
        learning_rate: float = 0.01,
        smoothness_weight: float = 0.01,
        pyramid_weight: float = 0.5,
        background: float = 0.5,
        prior: PriorSpec | None = None,
        view_distribution: ViewpointDistribution | None = None,
        light_distribution: LightingDistribution | None = None,
        dtype: str = "float32",
        iters: tuple[int, int, int] | None = None,
    ):
        self.stages = stages
        self.samples_per_stage = samples_per_stage
        self.projector = projector
        self.symmetry = symmetry
        self.seed = seed
        self.fov = fov
        self.optimizer = optimizer
        self.learning_rate = learning_rate
        self.smoothness_weight = smoothness_weight
        self.pyramid_weight = pyramid_weight
        self.background = background
        self.prior = prior
        self.view_distribution = view_distribution
        self.light_distribution = light_distribution
        self.dtype = dtype
        self.iters = iters

    def _build_config(self) -> PipelineConfig:
        overrides = dict(
            lr=self.learning_rate,
            smoothness_weight=self.smoothness_weight,
            pyramid_weight=self.pyramid_weight,
        )
        if self.iters is not None:
            it1, it2, it3 = self.iters
            overrides.update(iters1=it1, iters2=it2, iters3=it3)
        stages = default_stages(
            self.stages, self.samples_per_stage, self.symmetry, **overrides
        )
        return PipelineConfig(
            stages=stages,
            prior=self.prior if self.prior is not None else PriorSpec(),
            view_dist=(
                self.view_distribution
                if self.view_distribution is not None
                else ViewpointDistribution()
            ),
            light_dist=(
                self.light_distribution
                if self.light_distribution is not None
                else LightingDistribution()
            ),
            seed=self.seed,
            fov=self.fov,
            background=self.background,
            optimizer=self.optimizer,
            dtype=self.dtype,
        )

    def fit(self, X, y=None, mask=None, gt_depth=None):
        """Refine shape from a single image X of shape (H, W, 3) in [0, 1]."""
        if self.projector is None:
            raise ValueError(
                "ShapeRefiner requires a manifold projector; pass projector=... "
                "(e.g. photogeo.manifold.OracleProjector)"
            )
        image = check_image(X)
        if mask is not None:
            mask = check_mask(mask, image.shape[:2])
        result = run_pipeline(
            image, self._build_config(), self.projector, mask=mask, gt_depth=gt_depth
        )
        final = result.snapshots[-1]
        self.depth_ = final.depth
        self.albedo_ = final.albedo
        self.normals_ = final.normals
        self.lighting_ = final.lighting
        self.snapshots_ = result.snapshots
        self.camera_ = intrinsics_from_fov(image.shape[1], image.shape[0], self.fov)
        self.n_iter_ = sum(len(s.losses) for s in result.snapshots)
        return self

    def transform(self, X=None):
        """Return the refined depth map (the fitted embedding of the image)."""
        check_is_fitted(self, "depth_")
        return self.depth_

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X, y, **fit_params).transform()

    def rotate(self, extent_degrees: float = 20.0, frames: int = 20) -> list[np.ndarray]:
        """Render a yaw sweep of the recovered scene."""
        check_is_fitted(self, "depth_")
        angles = np.radians(np.linspace(-extent_degrees, extent_degrees, frames))
        return manipulate(
            self.depth_, self.albedo_, self.lighting_, self.camera_, "rotate",
            angles, self.background,
        )

    def relight(self, points) -> list[np.ndarray]:
        """Render the scene under a sweep of light directions (lx, ly) pairs."""
        check_is_fitted(self, "depth_")
        return manipulate(
            self.depth_, self.albedo_, self.lighting_, self.camera_, "relight",
            points, self.background,
        )

    def _more_tags(self):
        return {"X_types": ["2darray"], "non_deterministic": False}
