"""Deterministic sampling of viewpoints and lighting offsets.

All randomness flows through counter-based Philox streams keyed by
``(base_seed, stage, index, purpose)``: the draw for sample ``i`` of stage
``s`` is a fixed function of those integers, independent of how many other
samples are drawn or in what order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .camera import ROT_BOUND, TRANS_BOUND, Viewpoint

# purpose tags for the per-(stage, index) substreams
DRAW_VIEWPOINT = 0
DRAW_LIGHTING = 1
DRAW_NOISE = 2
DRAW_SCENE = 3


@dataclass(frozen=True)
class SeedPolicy:
    """Factory of independent deterministic RNG streams."""

    base_seed: int = 0

    def generator(self, stage: int, index: int, purpose: int = 0) -> np.random.Generator:
        """A Philox stream unique to (base_seed, stage, index, purpose)."""
        if stage < 0 or index < 0 or purpose < 0:
            raise ValueError("seed stream labels must be nonnegative")
        bits = np.random.Philox(
            key=np.uint64(self.base_seed & (2**64 - 1)),
            counter=[0, purpose, index, stage],
        )
        return np.random.Generator(bits)


def _default_view_cov() -> np.ndarray:
    # stds: ~9 degrees per rotation axis, 0.03 units per translation axis
    stds = np.array([0.15, 0.15, 0.15, 0.03, 0.03, 0.03])
    return np.diag(stds**2)


@dataclass(frozen=True)
class ViewpointDistribution:
    """Gaussian over the 6 viewpoint parameters, truncated by clamping."""

    mean: np.ndarray = field(default_factory=lambda: np.zeros(6))
    cov: np.ndarray = field(default_factory=_default_view_cov)
    rot_bound: float = ROT_BOUND
    trans_bound: float = TRANS_BOUND

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        cov = np.asarray(self.cov, dtype=np.float64)
        if mean.shape != (6,):
            raise ValueError(f"viewpoint mean must have 6 components, got {mean.shape}")
        if cov.shape != (6, 6):
            raise ValueError(f"viewpoint covariance must be 6x6, got {cov.shape}")
        if not np.allclose(cov, cov.T, atol=1e-12):
            raise ValueError("viewpoint covariance must be symmetric")
        try:
            chol = np.linalg.cholesky(cov + 1e-12 * np.eye(6))
        except np.linalg.LinAlgError as e:
            raise ValueError("viewpoint covariance must be positive semidefinite") from e
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "_chol", chol)

    def draw(self, rng: np.random.Generator) -> Viewpoint:
        z = rng.standard_normal(6)
        v = self.mean + self._chol @ z
        v[:3] = np.clip(v[:3], -self.rot_bound, self.rot_bound)
        v[3:] = np.clip(v[3:], -self.trans_bound, self.trans_bound)
        return Viewpoint.from_array(v)


@dataclass(frozen=True)
class LightingDistribution:
    """Uniform lighting-offset distribution.

    Draws offsets ``(dlx, dly, dkd)`` uniformly from the given ranges and
    couples the ambient offset as ``dks = alpha * dkd``.  Offsets are added
    to the current lighting values (after their squashing maps); strengths
    are clamped back into [0, 1] downstream.
    """

    lx_range: tuple[float, float] = (-1.0, 1.0)
    ly_range: tuple[float, float] = (-0.2, 0.8)
    kd_range: tuple[float, float] = (-0.1, 0.6)
    alpha: float = -0.6

    def __post_init__(self):
        for name in ("lx_range", "ly_range", "kd_range"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"lighting {name} must be ordered, got ({lo}, {hi})")

    @classmethod
    def generic(cls) -> "LightingDistribution":
        return cls()

    @classmethod
    def faces(cls) -> "LightingDistribution":
        """Ranges tuned for face-like scenes (stronger sideways sweep)."""
        return cls(lx_range=(-0.9, 0.9), ly_range=(-0.3, 0.8), kd_range=(-0.1, 0.7), alpha=-0.4)

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        """One offset vector (dlx, dly, dks, dkd)."""
        dlx = rng.uniform(*self.lx_range)
        dly = rng.uniform(*self.ly_range)
        dkd = rng.uniform(*self.kd_range)
        return np.array([dlx, dly, self.alpha * dkd, dkd])


def sample_viewpoints(
    dist: ViewpointDistribution, n: int, seeds: SeedPolicy, stage: int = 1
) -> list[Viewpoint]:
    """Draw ``n`` viewpoints; draw ``i`` depends only on (seed, stage, i)."""
    if n < 0:
        raise ValueError(f"sample count must be nonnegative, got {n}")
    return [
        dist.draw(seeds.generator(stage, i, DRAW_VIEWPOINT)) for i in range(n)
    ]


def sample_lightings(
    dist: LightingDistribution, n: int, seeds: SeedPolicy, stage: int = 1
) -> list[np.ndarray]:
    """Draw ``n`` lighting offsets; draw ``i`` depends only on (seed, stage, i)."""
    if n < 0:
        raise ValueError(f"sample count must be nonnegative, got {n}")
    return [dist.draw(seeds.generator(stage, i, DRAW_LIGHTING)) for i in range(n)]


def rotation_sweep(extent_degrees: float = 20.0, count: int = 20) -> list[Viewpoint]:
    """Evenly spaced yaw viewpoints from -extent to +extent degrees."""
    if count < 1:
        raise ValueError(f"sweep needs at least one frame, got {count}")
    angles = np.linspace(-extent_degrees, extent_degrees, count)
    return [Viewpoint(ry=math.radians(a)) for a in angles]
