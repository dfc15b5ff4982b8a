"""Depth, normal, and image agreement metrics."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

# PSNR reported for bitwise-identical images (instead of infinity).
PSNR_IDENTICAL = 99.0


def _flat_masked(a: np.ndarray, b: np.ndarray, mask) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if mask is None:
        return a.reshape(-1, *a.shape[2:]), b.reshape(-1, *b.shape[2:])
    m = np.asarray(mask).astype(bool)
    if m.shape != a.shape[:2]:
        raise ValueError(f"mask shape {m.shape} does not match maps {a.shape[:2]}")
    if not m.any():
        raise ValueError("mask selects no pixels")
    return a[m], b[m]


def side(depth_pred, depth_gt, mask=None) -> float:
    """Scale-invariant depth error: std of the per-pixel log-depth difference.

    ``sqrt(mean(delta^2) - mean(delta)^2)`` with ``delta = log d_pred - log d_gt``;
    invariant to a global depth scale on either input.
    """
    dp, dg = _flat_masked(depth_pred, depth_gt, mask)
    if (dp <= 0).any() or (dg <= 0).any():
        raise ValueError("depth maps must be strictly positive")
    delta = np.log(dp) - np.log(dg)
    var = np.mean(delta**2) - np.mean(delta) ** 2
    return float(np.sqrt(max(var, 0.0)))


def mad(normals_pred, normals_gt, mask=None) -> float:
    """Mean angular deviation between unit normal maps, in degrees."""
    npred, ngt = _flat_masked(normals_pred, normals_gt, mask)
    if npred.ndim != 2 or npred.shape[-1] != 3:
        raise ValueError(f"normal maps must have 3 components, got shape {npred.shape}")
    dots = np.clip((npred * ngt).sum(-1), -1.0, 1.0)
    return float(np.degrees(np.arccos(dots).mean()))


def psnr(image_a, image_b, mask=None) -> float:
    """Peak signal-to-noise ratio in dB for images in [0, 1].

    Identical inputs report the sentinel ``PSNR_IDENTICAL`` (99 dB) rather
    than infinity; the value is also capped there.
    """
    a, b = _flat_masked(image_a, image_b, mask)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_IDENTICAL
    return float(min(10.0 * np.log10(1.0 / mse), PSNR_IDENTICAL))


@dataclass
class EvalReport:
    """Bundle of evaluation metrics.

    ``side`` is reported in units of 10^-2 (a raw value of 0.005 prints as
    0.5); ``mad`` in degrees; ``psnr`` in dB or None when no image pair was
    evaluated; ``pixels`` is the number of pixels used.
    """

    side: float
    mad: float
    psnr: float | None
    pixels: int

    def __post_init__(self):
        if self.side < 0:
            raise ValueError(f"side must be nonnegative, got {self.side}")
        if not 0.0 <= self.mad <= 180.0:
            raise ValueError(f"mad must lie in [0, 180] degrees, got {self.mad}")
        if self.pixels <= 0:
            raise ValueError(f"pixel count must be positive, got {self.pixels}")

    def to_dict(self) -> dict:
        out = {"side": self.side, "mad": self.mad, "pixels": self.pixels}
        if self.psnr is not None:
            out["psnr"] = self.psnr
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def evaluate_depth(depth_pred, depth_gt, K, mask=None, image_pred=None, image_gt=None) -> EvalReport:
    """Evaluate a predicted depth map against ground truth.

    Computes SIDE (scaled by 100 for reporting), MAD between normal maps
    derived from the depths with intrinsics ``K``, and optionally PSNR of an
    associated image pair.
    """
    from .camera import compute_normals

    np_pred = compute_normals(np.asarray(depth_pred, dtype=np.float64), K)
    np_gt = compute_normals(np.asarray(depth_gt, dtype=np.float64), K)
    if mask is None:
        pixels = int(np.asarray(depth_pred).shape[0] * np.asarray(depth_pred).shape[1])
    else:
        pixels = int(np.asarray(mask).astype(bool).sum())
    p = None
    if image_pred is not None and image_gt is not None:
        p = psnr(image_pred, image_gt, mask)
    return EvalReport(
        side=100.0 * side(depth_pred, depth_gt, mask),
        mad=mad(np_pred, np_gt, mask),
        psnr=p,
        pixels=pixels,
    )
