"""Projection of pseudo-views onto an image manifold.

The refinement pipeline renders pseudo-views of its current shape estimate
and asks a projector to pull each one onto a manifold of plausible images
of the scene.  The projector interface is pluggable; this module provides

* :class:`OracleProjector` — the manifold is the set of renders of a known
  ground-truth surface.  Projection fits viewpoint and lighting of the
  ground truth to the pseudo-view by gradient descent, so the pipeline can
  be studied with an exactly characterized manifold.
* :class:`ReplayProjector` — projections precomputed by an external system
  are read back from disk in sample order.

Any object with a compatible ``project`` method works in their place.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np
import torch

from .camera import ROT_BOUND, TRANS_BOUND, CameraIntrinsics, _as_tensor
from .rendering import render_batch
from .sampling import DRAW_NOISE, SeedPolicy
from .shading import Lighting, lighting_values_from_raw, raw_from_lighting_values
from . import fileio

# A projection counts as converged when the fit improved its residual by at
# least this factor over the residual at the hint.
CONVERGENCE_FACTOR = 0.99


@dataclass
class ProjectionResult:
    """One projected sample: the image plus fit diagnostics."""

    image: np.ndarray  # (H, W, C) float64
    converged: bool
    residual: float
    viewpoint: np.ndarray | None = None  # fitted (6,) if the projector fits one
    lighting: np.ndarray | None = None  # fitted values (4,)


@runtime_checkable
class ManifoldProjector(Protocol):
    def project(
        self, pseudo, hint_v, hint_l, *, stage: int = 1, index: int = 0
    ) -> ProjectionResult: ...


class OracleProjector:
    """Projects onto the manifold of renders of a known surface.

    Given a pseudo-view, fits the viewpoint and lighting of the ground-truth
    (depth, albedo) pair that best reproduce it (mean-L1, full frame) and
    returns that render.  With ``noise_level`` > 0, zero-mean uniform pixel
    noise of that amplitude is added, emulating an imperfect inversion; with
    ``fit_budget`` = 0 the render at the hint is returned unchanged.
    """

    def __init__(
        self,
        depth,
        albedo,
        K: CameraIntrinsics,
        fit_budget: int = 300,
        noise_level: float = 0.0,
        lr: float = 0.02,
        background: float = 0.5,
        seeds: SeedPolicy | None = None,
        dtype: torch.dtype = torch.float32,
    ):
        self.depth = np.asarray(depth, dtype=np.float64)
        self.albedo = np.asarray(albedo, dtype=np.float64)
        if self.depth.ndim != 2 or self.albedo.shape[:2] != self.depth.shape:
            raise ValueError(
                f"oracle surface shapes disagree: depth {self.depth.shape}, "
                f"albedo {self.albedo.shape}"
            )
        if fit_budget < 0:
            raise ValueError(f"fit_budget must be nonnegative, got {fit_budget}")
        if noise_level < 0:
            raise ValueError(f"noise_level must be nonnegative, got {noise_level}")
        self.K = K
        self.fit_budget = fit_budget
        self.noise_level = noise_level
        self.lr = lr
        self.background = background
        self.seeds = seeds if seeds is not None else SeedPolicy(0)
        self.dtype = dtype
        self._depth_t = _as_tensor(self.depth).to(dtype)
        self._albedo_t = _as_tensor(self.albedo).to(dtype)

    @classmethod
    def from_scene(cls, scene, **kwargs) -> "OracleProjector":
        return cls(scene.depth, scene.albedo, scene.K, **kwargs)

    def project(self, pseudo, hint_v, hint_l, *, stage: int = 1, index: int = 0):
        return self.project_batch(
            _as_tensor(pseudo).unsqueeze(0),
            _as_tensor(np.asarray(hint_v, dtype=np.float64)).reshape(1, 6),
            _as_tensor(
                hint_l.as_array() if isinstance(hint_l, Lighting) else np.asarray(hint_l)
            ).reshape(1, 4),
            stage=stage,
            start_index=index,
        )[0]

    def project_batch(
        self, pseudos, hint_vs, hint_ls, *, stage: int = 1, start_index: int = 0
    ) -> list[ProjectionResult]:
        """Project a batch of pseudo-views in one joint fit.

        Each sample has independent (viewpoint, lighting) parameters, so the
        joint fit is equivalent to fitting the samples one at a time;
        batching just shares the rasterization work.
        """
        targets = _as_tensor(pseudos).to(self.dtype)
        B = targets.shape[0]
        v = _as_tensor(hint_vs).to(self.dtype).clone().reshape(B, 6)
        l_raw = raw_from_lighting_values(
            _as_tensor(hint_ls).to(self.dtype).reshape(B, 4)
        ).clone()
        init_v, init_lraw = v.clone(), l_raw.clone()
        v.requires_grad_(True)
        l_raw.requires_grad_(True)

        def residuals(vp, lraw):
            imgs, _, _ = render_batch(
                self._depth_t,
                self._albedo_t,
                vp,
                lighting_values_from_raw(lraw),
                self.K,
                self.background,
            )
            return (imgs - targets).abs().mean(dim=(1, 2, 3))

        with torch.no_grad():
            init_res = residuals(v, l_raw)
        best_res = init_res.clone()
        best_v = v.detach().clone()
        best_lraw = l_raw.detach().clone()

        if self.fit_budget > 0:
            opt = torch.optim.Adam([v, l_raw], lr=self.lr)
            for _ in range(self.fit_budget):
                opt.zero_grad()
                res = residuals(v, l_raw)
                res.sum().backward()
                opt.step()
                with torch.no_grad():
                    v[:, :3].clamp_(-ROT_BOUND, ROT_BOUND)
                    v[:, 3:].clamp_(-TRANS_BOUND, TRANS_BOUND)
                    cur = residuals(v, l_raw)
                    better = cur < best_res
                    best_res = torch.where(better, cur, best_res)
                    best_v[better] = v.detach()[better]
                    best_lraw[better] = l_raw.detach()[better]

        with torch.no_grad():
            light_vals = lighting_values_from_raw(best_lraw)
            imgs, _, _ = render_batch(
                self._depth_t, self._albedo_t, best_v, light_vals, self.K, self.background
            )
        results = []
        for i in range(B):
            img = imgs[i].to(torch.float64).numpy()
            if self.noise_level > 0:
                rng = self.seeds.generator(stage, start_index + i, DRAW_NOISE)
                img = img + rng.uniform(-self.noise_level, self.noise_level, img.shape)
            results.append(
                ProjectionResult(
                    image=img,
                    converged=bool(best_res[i] <= CONVERGENCE_FACTOR * init_res[i]),
                    residual=float(best_res[i]),
                    viewpoint=best_v[i].to(torch.float64).numpy(),
                    lighting=light_vals[i].to(torch.float64).numpy(),
                )
            )
        return results


class ReplayProjector:
    """Reads precomputed projections ``proj_000.png, proj_001.png, ...``.

    ``index`` is the running pseudo-sample counter across the whole run
    (stage boundaries do not reset it).  Construction checks the directory
    exists; ``require_count`` additionally checks enough files are present
    before a run starts.
    """

    def __init__(self, directory):
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise FileNotFoundError(f"replay directory not found: {self.directory}")

    def path_for(self, index: int) -> Path:
        return self.directory / f"proj_{index:03d}.png"

    def require_count(self, count: int) -> None:
        missing = [str(self.path_for(i)) for i in range(count) if not self.path_for(i).exists()]
        if missing:
            raise FileNotFoundError(
                f"replay directory {self.directory} is missing {len(missing)} "
                f"projection(s), first: {missing[0]}"
            )

    def load(self, index: int) -> np.ndarray:
        path = self.path_for(index)
        if not path.exists():
            raise FileNotFoundError(f"missing replay projection: {path}")
        return fileio.read_png(path)

    def project(self, pseudo, hint_v, hint_l, *, stage: int = 1, index: int = 0):
        img = self.load(index)
        pseudo_np = np.asarray(
            pseudo.detach().numpy() if torch.is_tensor(pseudo) else pseudo, dtype=np.float64
        )
        if img.shape != pseudo_np.shape:
            raise ValueError(
                f"replay projection {self.path_for(index)} has shape {img.shape}, "
                f"expected {pseudo_np.shape}"
            )
        residual = float(np.abs(img - pseudo_np).mean())
        return ProjectionResult(image=img, converged=True, residual=residual)
