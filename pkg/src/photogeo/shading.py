"""Lambertian shading with a single directional light plus ambient term."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .camera import _as_tensor, _wants_numpy


@dataclass(frozen=True)
class Lighting:
    """Directional-light parameters.

    ``(lx, ly)`` parameterize the light direction ``(lx, ly, 1) / norm``;
    ``ks`` is the ambient strength and ``kd`` the diffuse strength, both in
    [0, 1].  The default is the canonical lighting (pure ambient), under
    which shading returns the albedo unchanged.
    """

    lx: float = 0.0
    ly: float = 0.0
    ks: float = 1.0
    kd: float = 0.0

    def __post_init__(self):
        for name in ("ks", "kd"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"lighting {name}={v} must lie in [0, 1]")

    def direction(self) -> np.ndarray:
        return light_direction(self.lx, self.ly)

    def as_array(self) -> np.ndarray:
        return np.array([self.lx, self.ly, self.ks, self.kd])

    @classmethod
    def from_array(cls, a) -> "Lighting":
        a = np.asarray(a, dtype=float).reshape(4)
        return cls(*a.tolist())

    def with_offset(self, dlx: float, dly: float, dks: float, dkd: float) -> "Lighting":
        """Add offsets to the parameters, clamping ks and kd back into [0, 1]."""
        return Lighting(
            self.lx + dlx,
            self.ly + dly,
            float(np.clip(self.ks + dks, 0.0, 1.0)),
            float(np.clip(self.kd + dkd, 0.0, 1.0)),
        )


CANONICAL_LIGHTING = Lighting(0.0, 0.0, 1.0, 0.0)


def light_direction(lx, ly):
    """Unit light direction ``(lx, ly, 1) / sqrt(lx^2 + ly^2 + 1)``.

    Accepts scalars or arrays; broadcasts to shape (..., 3).
    """
    wants_np = _wants_numpy(lx, ly)
    lxt, lyt = torch.broadcast_tensors(_as_tensor(lx), _as_tensor(ly))
    one = torch.ones_like(lxt)
    d = torch.stack([lxt, lyt, one], dim=-1)
    d = d / torch.linalg.norm(d, dim=-1, keepdim=True)
    return d.numpy() if wants_np else d


def shade_values(albedo, normals, lx, ly, ks, kd):
    """Shading with raw tensor lighting values; supports leading batch dims.

    ``albedo`` (..., H, W, C), ``normals`` (..., H, W, 3); lighting values
    broadcast against the leading dims.  Returns (..., H, W, C).
    """
    a = _as_tensor(albedo)
    n = _as_tensor(normals)
    l = light_direction(_as_tensor(lx), _as_tensor(ly))  # (..., 3)
    lam = (n * l.reshape(l.shape[:-1] + (1, 1, 3))).sum(-1).clamp(min=0.0)  # (..., H, W)
    ks = _as_tensor(ks).reshape(_as_tensor(ks).shape + (1, 1))
    kd = _as_tensor(kd).reshape(_as_tensor(kd).shape + (1, 1))
    return (ks + kd * lam).unsqueeze(-1) * a


def shade(albedo, normals, lighting: Lighting):
    """Shade an albedo map: ``J = (ks + kd * max(0, <l, n>)) * a``.

    ``albedo`` is (H, W, C) and ``normals`` (H, W, 3); shapes must agree on
    (H, W).  Output is not clamped; values may exceed 1 before export.
    """
    a = _as_tensor(albedo)
    n = _as_tensor(normals)
    if a.dim() != 3 or n.dim() != 3 or a.shape[:2] != n.shape[:2] or n.shape[2] != 3:
        raise ValueError(
            f"albedo {tuple(a.shape)} and normals {tuple(n.shape)} must be "
            "(H, W, C) and (H, W, 3) with matching H, W"
        )
    out = shade_values(a, n, lighting.lx, lighting.ly, lighting.ks, lighting.kd)
    return out.numpy() if _wants_numpy(albedo, normals) else out


def albedo_from_raw(raw):
    """Sigmoid map of unconstrained parameters into (0, 1)."""
    out = torch.sigmoid(_as_tensor(raw))
    return out.numpy() if _wants_numpy(raw) else out


def raw_from_albedo(albedo, eps: float = 1e-6):
    """Inverse sigmoid, clipping into the open interval first."""
    a = torch.clamp(_as_tensor(albedo), eps, 1.0 - eps)
    out = torch.log(a) - torch.log1p(-a)
    return out.numpy() if _wants_numpy(albedo) else out


def lighting_values_from_raw(raw):
    """Map raw lighting parameters (..., 4) to values (lx, ly, ks, kd).

    Direction parameters pass through unchanged; strengths are squashed by
    ``0.5 * (1 + tanh)`` into (0, 1).
    """
    r = _as_tensor(raw)
    if r.shape[-1] != 4:
        raise ValueError(f"lighting parameters must have 4 components, got {tuple(r.shape)}")
    out = torch.cat([r[..., :2], 0.5 * (1.0 + torch.tanh(r[..., 2:]))], dim=-1)
    return out.numpy() if _wants_numpy(raw) else out


def raw_from_lighting_values(values, eps: float = 1e-6):
    """Inverse of lighting_values_from_raw; strengths clipped into (0, 1)."""
    v = _as_tensor(values)
    if v.shape[-1] != 4:
        raise ValueError(f"lighting values must have 4 components, got {tuple(v.shape)}")
    s = torch.clamp(2.0 * v[..., 2:] - 1.0, -1.0 + eps, 1.0 - eps)
    out = torch.cat([v[..., :2], torch.atanh(s)], dim=-1)
    return out.numpy() if _wants_numpy(values) else out


def apply_lighting_offset(values, offset):
    """Add a sampled offset to lighting values, clamping ks, kd into [0, 1]."""
    v = _as_tensor(values)
    o = _as_tensor(offset)
    out = v + o
    out = torch.cat([out[..., :2], out[..., 2:].clamp(0.0, 1.0)], dim=-1)
    return out.numpy() if _wants_numpy(values, offset) else out
