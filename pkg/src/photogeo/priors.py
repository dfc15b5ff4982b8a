"""Shape priors used to initialize the canonical depth map."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PRIOR_NEAR = 0.91
PRIOR_FAR = 1.02

_KINDS = ("ellipsoid", "asymmetric", "shifted", "weak", "flat")


@dataclass(frozen=True)
class PriorSpec:
    """Description of an initial coarse shape.

    ``center`` is (row, col) in pixels and ``radii`` (r_i, r_j) in pixels;
    both default to image-derived values when None (center of the frame,
    radii 0.35 * height and 0.3 * width).  ``depth_range`` is (near, far)
    and must sit inside the global depth box.  ``shift_fraction`` applies to
    the ``shifted`` kind: the center moves by that fraction of the width
    along columns.
    """

    kind: str = "ellipsoid"
    center: tuple[float, float] | None = None
    radii: tuple[float, float] | None = None
    depth_range: tuple[float, float] = (PRIOR_NEAR, PRIOR_FAR)
    shift_fraction: float = 1.0 / 6.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown prior kind {self.kind!r}; expected one of {_KINDS}")
        near, far = self.depth_range
        if not 0.9 < near < far < 1.1:
            raise ValueError(
                f"prior depth range {self.depth_range} must satisfy 0.9 < near < far < 1.1"
            )


def _mask_geometry(mask: np.ndarray) -> tuple[tuple[float, float], tuple[float, float]]:
    m = np.asarray(mask).astype(bool)
    if not m.any():
        raise ValueError("mask is empty; cannot derive a prior placement")
    rows = np.flatnonzero(m.any(axis=1))
    cols = np.flatnonzero(m.any(axis=0))
    ci = 0.5 * (rows[0] + rows[-1])
    cj = 0.5 * (cols[0] + cols[-1])
    ri = 0.5 * (rows[-1] - rows[0] + 1)
    rj = 0.5 * (cols[-1] - cols[0] + 1)
    return (ci, cj), (ri, rj)


def build_prior(spec: PriorSpec, width: int, height: int, mask=None) -> np.ndarray:
    """Rasterize a prior depth map of shape (height, width).

    The base shape is an ellipsoid cap bulging toward the camera from a
    background plane at ``far``:

        d(i, j) = far - (far - near) * sqrt(max(0, 1 - u^2 - v^2))

    with ``u = (j - c_j) / r_j`` and ``v = (i - c_i) / r_i``.  Variants:
    ``asymmetric`` swaps in a sphere (both radii = min radius) for columns
    right of center; ``shifted`` moves the center along columns; ``weak``
    halves the depth extent; ``flat`` is the constant background plane.
    When a mask is given, center and radii default to the mask bounding box
    (its center and half-extents) instead of the frame-derived values.
    """
    if width < 2 or height < 2:
        raise ValueError(f"prior size must be at least 2x2, got {width}x{height}")
    near, far = spec.depth_range
    if mask is not None and (spec.center is None or spec.radii is None):
        mcenter, mradii = _mask_geometry(mask)
    else:
        mcenter, mradii = None, None
    ci, cj = spec.center if spec.center is not None else (
        mcenter if mcenter is not None else ((height - 1) / 2.0, (width - 1) / 2.0)
    )
    ri, rj = spec.radii if spec.radii is not None else (
        mradii if mradii is not None else (0.35 * height, 0.3 * width)
    )
    if ri <= 0 or rj <= 0:
        raise ValueError(f"prior radii must be positive, got ({ri}, {rj})")

    if spec.kind == "flat":
        return np.full((height, width), far, dtype=np.float64)
    if spec.kind == "weak":
        near = far - 0.5 * (far - near)
    if spec.kind == "shifted":
        cj = cj + spec.shift_fraction * width

    ii, jj = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    u = (jj - cj) / rj
    v = (ii - ci) / ri
    bulge = np.sqrt(np.clip(1.0 - u**2 - v**2, 0.0, None))
    if spec.kind == "asymmetric":
        r = min(ri, rj)
        us = (jj - cj) / r
        vs = (ii - ci) / r
        sphere = np.sqrt(np.clip(1.0 - us**2 - vs**2, 0.0, None))
        bulge = np.where(jj > cj, sphere, bulge)
    return far - (far - near) * bulge
