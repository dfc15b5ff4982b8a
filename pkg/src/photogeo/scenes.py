"""Built-in synthetic ground-truth scenes.

Each scene is a smooth height field inside the global depth box with a
textured albedo, a foreground mask, and a canonical image rendered at the
identity viewpoint under the scene's base lighting.  Everything is analytic
and deterministic, so scene content is identical across runs and platforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import DEFAULT_FOV, CameraIntrinsics, intrinsics_from_fov
from .shading import Lighting

SCENE_NAMES = ("hemisphere", "bump2", "ridge")
MIN_SCENE_SIZE = 16

_BACKGROUND_DEPTH = 1.05


@dataclass
class Scene:
    """Ground-truth surface, reflectance, and canonical image."""

    name: str
    depth: np.ndarray  # (H, W)
    albedo: np.ndarray  # (H, W, 3)
    mask: np.ndarray  # (H, W) bool
    lighting: Lighting
    K: CameraIntrinsics
    image: np.ndarray  # (H, W, 3) canonical render, clipped to [0, 1]


def _albedo_pattern(width: int, height: int) -> np.ndarray:
    """Smooth, j-asymmetric multi-frequency color pattern in [0.05, 0.95]."""
    jj, ii = np.meshgrid(np.arange(width), np.arange(height), indexing="xy")
    u = jj / max(width - 1, 1)
    v = ii / max(height - 1, 1)
    r = 0.55 + 0.30 * np.sin(2 * np.pi * (2.3 * u + 0.7 * v) + 1.1)
    g = 0.50 + 0.30 * np.sin(2 * np.pi * (1.4 * u - 1.9 * v) + 0.4) * np.cos(
        2 * np.pi * 0.8 * u
    )
    b = 0.45 + 0.30 * np.cos(2 * np.pi * (0.9 * u + 1.3 * v) - 0.6)
    a = np.stack([r, g, b], axis=-1)
    return np.clip(a, 0.05, 0.95)


def _bump(width, height, ci, cj, radius, height_units):
    ii, jj = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    rr = np.sqrt(((ii - ci) / radius) ** 2 + ((jj - cj) / radius) ** 2)
    return height_units * np.sqrt(np.clip(1.0 - rr**2, 0.0, None))


def make_scene(name: str, width: int, height: int, fov: float = DEFAULT_FOV) -> Scene:
    """Build a named scene at the given size.

    Known names: ``hemisphere`` (one centered dome), ``bump2`` (two domes of
    different size, clearly left/right asymmetric), ``ridge`` (an elongated
    rounded ridge).  Sizes below 16 pixels are rejected: the refinement
    pipeline needs room for its image pyramid and mesh.
    """
    if name not in SCENE_NAMES:
        raise ValueError(f"unknown scene {name!r}; expected one of {SCENE_NAMES}")
    if width < MIN_SCENE_SIZE or height < MIN_SCENE_SIZE:
        raise ValueError(
            f"scene size must be at least {MIN_SCENE_SIZE}, got {width}x{height}"
        )
    H, W = height, width
    far = _BACKGROUND_DEPTH
    ci, cj = (H - 1) / 2.0, (W - 1) / 2.0
    if name == "hemisphere":
        r = 0.38 * min(H, W)
        bump = _bump(W, H, ci, cj, r, 0.11)
        support = _bump(W, H, ci, cj, r * 1.12, 1.0) > 0
    elif name == "bump2":
        r1, r2 = 0.30 * min(H, W), 0.20 * min(H, W)
        b1 = _bump(W, H, ci - 0.08 * H, cj - 0.18 * W, r1, 0.10)
        b2 = _bump(W, H, ci + 0.12 * H, cj + 0.22 * W, r2, 0.08)
        bump = np.maximum(b1, b2)
        support = (
            _bump(W, H, ci - 0.08 * H, cj - 0.18 * W, r1 * 1.15, 1.0)
            + _bump(W, H, ci + 0.12 * H, cj + 0.22 * W, r2 * 1.15, 1.0)
        ) > 0
    else:  # ridge
        jj, ii = np.meshgrid(np.arange(W), np.arange(H), indexing="xy")
        t = (jj - cj) / (0.22 * W)
        along = np.clip(1.0 - ((ii - ci) / (0.42 * H)) ** 2, 0.0, None)
        bump = 0.10 * np.sqrt(np.clip(1.0 - t**2, 0.0, None)) * np.sqrt(along)
        support = (np.abs(t) < 1.25) & (along > 0.02)
    depth = far - bump
    albedo = _albedo_pattern(W, H)
    lighting = Lighting(lx=0.4, ly=0.25, ks=0.65, kd=0.35)
    K = intrinsics_from_fov(W, H, fov)

    from .rendering import render

    out = render(depth, albedo, None, lighting, K)
    image = np.clip(out.image.numpy(), 0.0, 1.0)
    return Scene(
        name=name,
        depth=depth,
        albedo=albedo,
        mask=support,
        lighting=lighting,
        K=K,
        image=image,
    )
