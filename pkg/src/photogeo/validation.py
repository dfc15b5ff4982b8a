"""Input validation helpers for user-facing entry points."""

from __future__ import annotations

import numpy as np


def check_image(X, name: str = "image") -> np.ndarray:
    """Validate an image array and return it as (H, W, 3) float64 in [0, 1].

    Grayscale (H, W) input is broadcast to three channels; an alpha channel
    is dropped.
    """
    a = np.asarray(X, dtype=np.float64)
    if a.ndim == 2:
        a = np.stack([a, a, a], axis=-1)
    if a.ndim != 3 or a.shape[2] not in (3, 4):
        raise ValueError(f"{name} must be (H, W), (H, W, 3) or (H, W, 4), got shape {a.shape}")
    a = a[..., :3]
    if a.shape[0] < 2 or a.shape[1] < 2:
        raise ValueError(f"{name} must be at least 2x2 pixels, got {a.shape[:2]}")
    if not np.isfinite(a).all():
        raise ValueError(f"{name} contains non-finite values")
    if a.min() < 0.0 or a.max() > 1.0:
        raise ValueError(
            f"{name} values must lie in [0, 1], got range [{a.min():.4g}, {a.max():.4g}]"
        )
    return a


def check_mask(mask, shape: tuple[int, int], name: str = "mask") -> np.ndarray:
    """Validate a mask against an image shape; returns (H, W) bool."""
    m = np.asarray(mask)
    if m.ndim == 3:
        m = m[..., 0]
    if m.shape != tuple(shape):
        raise ValueError(f"{name} shape {m.shape} does not match image {tuple(shape)}")
    m = m.astype(bool)
    if not m.any():
        raise ValueError(f"{name} selects no pixels")
    return m


def check_depth_map(depth, shape: tuple[int, int] | None = None, name: str = "depth") -> np.ndarray:
    """Validate a depth map: finite, strictly positive, optionally a fixed shape."""
    d = np.asarray(depth, dtype=np.float64)
    if d.ndim != 2:
        raise ValueError(f"{name} must be (H, W), got shape {d.shape}")
    if shape is not None and d.shape != tuple(shape):
        raise ValueError(f"{name} shape {d.shape} does not match expected {tuple(shape)}")
    if not np.isfinite(d).all():
        raise ValueError(f"{name} contains non-finite values")
    if (d <= 0).any():
        raise ValueError(f"{name} must be strictly positive")
    return d
