"""Pinhole camera model, viewpoints, poses, and depth-map geometry.

Conventions used throughout the package:

* Pixel coordinates are ``(x, y)`` with ``x`` running along columns and
  ``y`` along rows; the pixel at row ``i``, column ``j`` has center
  ``(x, y) = (j, i)``.
* The camera looks down +z.  A depth map stores the z coordinate of the
  surface point seen through each pixel center.
* Depth maps live in a fixed box ``(DEPTH_MIN, DEPTH_MAX)`` around unit
  distance, enforced through the tanh parameterization below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

DEPTH_MIN = 0.9
DEPTH_MAX = 1.1
# Viewpoint rotations pivot about the center of the depth box on the optical
# axis rather than the camera origin; at a narrow field of view a rotation
# about the origin would sweep the whole scene out of frame.
ROT_CENTER = (0.0, 0.0, 0.5 * (DEPTH_MIN + DEPTH_MAX))

DEFAULT_FOV = math.radians(10.0)
ROT_BOUND = math.pi / 3.0
TRANS_BOUND = 0.1

_EPS_Z = 1e-8


def _as_tensor(x, dtype=torch.float64) -> torch.Tensor:
    if torch.is_tensor(x):
        return x
    return torch.as_tensor(np.asarray(x), dtype=dtype)


def _wants_numpy(*xs) -> bool:
    return not any(torch.is_tensor(x) for x in xs)


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics with square pixels and no skew."""

    width: int
    height: int
    f: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise ValueError(
                f"image size must be at least 2x2, got {self.width}x{self.height}"
            )
        if not self.f > 0.0:
            raise ValueError(f"focal length must be positive, got {self.f}")

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.f, 0.0, self.cx], [0.0, self.f, self.cy], [0.0, 0.0, 1.0]]
        )

    def inverse_matrix(self) -> np.ndarray:
        return np.array(
            [
                [1.0 / self.f, 0.0, -self.cx / self.f],
                [0.0, 1.0 / self.f, -self.cy / self.f],
                [0.0, 0.0, 1.0],
            ]
        )


def intrinsics_from_fov(width: int, height: int, fov: float = DEFAULT_FOV) -> CameraIntrinsics:
    """Build intrinsics from a horizontal field of view in radians.

    The principal point sits at the center of the pixel grid and the focal
    length is chosen so the horizontal extent of the grid spans ``fov``:
    ``f = (width - 1) / (2 tan(fov / 2))``.
    """
    if width < 2 or height < 2:
        raise ValueError(f"image size must be at least 2x2, got {width}x{height}")
    if not 0.0 < fov < math.pi:
        raise ValueError(f"fov must lie in (0, pi) radians, got {fov}")
    f = (width - 1) / (2.0 * math.tan(fov / 2.0))
    return CameraIntrinsics(width, height, f, (width - 1) / 2.0, (height - 1) / 2.0)


@dataclass(frozen=True)
class Viewpoint:
    """Rigid motion parameters: rotation angles (radians) and translation.

    Angles are applied as R = Rz(rz) @ Ry(ry) @ Rx(rx) about the rotation
    center; translations are in depth units.
    """

    rx: float = 0.0
    ry: float = 0.0
    rz: float = 0.0
    tx: float = 0.0
    ty: float = 0.0
    tz: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.rx, self.ry, self.rz, self.tx, self.ty, self.tz])

    @classmethod
    def from_array(cls, a) -> "Viewpoint":
        a = np.asarray(a, dtype=float).reshape(6)
        return cls(*a.tolist())

    def check_bounds(self, rot_bound: float = ROT_BOUND, trans_bound: float = TRANS_BOUND) -> None:
        for name in ("rx", "ry", "rz"):
            if abs(getattr(self, name)) > rot_bound:
                raise ValueError(
                    f"viewpoint {name}={getattr(self, name):.4f} out of bounds "
                    f"(|angle| <= {rot_bound:.4f})"
                )
        for name in ("tx", "ty", "tz"):
            if abs(getattr(self, name)) > trans_bound:
                raise ValueError(
                    f"viewpoint {name}={getattr(self, name):.4f} out of bounds "
                    f"(|t| <= {trans_bound})"
                )


@dataclass(frozen=True)
class Pose:
    """A rigid transform ``p -> R @ p + T`` in camera coordinates."""

    R: np.ndarray
    T: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, dtype=float)
        T = np.asarray(self.T, dtype=float)
        if R.shape != (3, 3) or T.shape != (3,):
            raise ValueError(f"pose needs R (3,3) and T (3,), got {R.shape} and {T.shape}")
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-9):
            raise ValueError("pose rotation is not orthonormal")
        if not abs(np.linalg.det(R) - 1.0) <= 1e-9:
            raise ValueError("pose rotation must have determinant +1")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "T", T)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, points):
        pts = _as_tensor(points)
        out = transform_points(pts, _as_tensor(self.R, pts.dtype), _as_tensor(self.T, pts.dtype))
        return out.numpy() if _wants_numpy(points) else out

    def compose(self, other: "Pose") -> "Pose":
        """Return the pose applying ``other`` first, then ``self``."""
        return Pose(self.R @ other.R, self.R @ other.T + self.T)

    def inverse(self) -> "Pose":
        return Pose(self.R.T, -self.R.T @ self.T)


def rotation_from_angles(rx, ry, rz) -> torch.Tensor:
    """R = Rz @ Ry @ Rx for angle tensors of any broadcastable shape.

    Returns a tensor of shape ``(..., 3, 3)``; differentiable in the angles.
    """
    rx, ry, rz = (_as_tensor(a) for a in (rx, ry, rz))
    rx, ry, rz = torch.broadcast_tensors(rx, ry, rz)
    cx, sx = torch.cos(rx), torch.sin(rx)
    cy, sy = torch.cos(ry), torch.sin(ry)
    cz, sz = torch.cos(rz), torch.sin(rz)
    one = torch.ones_like(cx)
    zero = torch.zeros_like(cx)
    Rx = torch.stack(
        [one, zero, zero, zero, cx, -sx, zero, sx, cx], dim=-1
    ).reshape(rx.shape + (3, 3))
    Ry = torch.stack(
        [cy, zero, sy, zero, one, zero, -sy, zero, cy], dim=-1
    ).reshape(ry.shape + (3, 3))
    Rz = torch.stack(
        [cz, -sz, zero, sz, cz, zero, zero, zero, one], dim=-1
    ).reshape(rz.shape + (3, 3))
    return Rz @ Ry @ Rx


def pose_tensors_from_viewpoint(v, center=ROT_CENTER):
    """Differentiable (R, T) for viewpoint parameter tensors of shape (..., 6).

    The rotation pivots about ``center``: T = t + c - R @ c, so the full
    transform is ``p -> R @ (p - c) + c + t``.
    """
    v = _as_tensor(v)
    if v.shape[-1] != 6:
        raise ValueError(f"viewpoint parameters must have 6 components, got shape {tuple(v.shape)}")
    R = rotation_from_angles(v[..., 0], v[..., 1], v[..., 2])
    c = _as_tensor(center, v.dtype if v.is_floating_point() else torch.float64)
    T = v[..., 3:6] + c - (R @ c.reshape(3, 1)).squeeze(-1)
    return R, T


def viewpoint_to_pose(
    v: Viewpoint,
    center=ROT_CENTER,
    rot_bound: float = ROT_BOUND,
    trans_bound: float = TRANS_BOUND,
) -> Pose:
    """Turn viewpoint parameters into a Pose, enforcing parameter bounds."""
    if not isinstance(v, Viewpoint):
        v = Viewpoint.from_array(v)
    v.check_bounds(rot_bound, trans_bound)
    R, T = pose_tensors_from_viewpoint(_as_tensor(v.as_array()), center)
    return Pose(R.numpy(), T.numpy())


def transform_points(points, R, T):
    """Apply ``p -> R @ p + T`` over the last axis of ``points`` (..., 3).

    ``R`` may be (3, 3) or batched (B, 3, 3) against points (B, ..., 3).
    """
    points = _as_tensor(points)
    R = _as_tensor(R, points.dtype)
    T = _as_tensor(T, points.dtype)
    if R.dim() == 2:
        out = points @ R.transpose(-1, -2) + T
    else:
        # batch dims lead: (B, ..., 3) @ (B, 3, 3)^T
        if points.dim() == 2:
            points = points.unsqueeze(0).expand(R.shape[0], -1, -1)
        out = torch.einsum("b...j,bkj->b...k", points, R) + T.reshape(
            T.shape[0], *([1] * (points.dim() - 2)), 3
        )
    return out


def project_points(points, K: CameraIntrinsics):
    """Project camera-frame points (..., 3) to pixel coordinates (..., 2).

    No visibility handling: callers must check z > 0 themselves.
    """
    pts = _as_tensor(points)
    z = pts[..., 2]
    x = K.f * pts[..., 0] / z + K.cx
    y = K.f * pts[..., 1] / z + K.cy
    out = torch.stack([x, y], dim=-1)
    return out.numpy() if _wants_numpy(points) else out


def unproject(x, y, depth, K: CameraIntrinsics):
    """Lift pixel coordinates with depth to camera-frame points (..., 3).

    ``P = depth * K^{-1} (x, y, 1)``; inputs broadcast together.  Depth must
    be strictly positive.
    """
    wants_np = _wants_numpy(x, y, depth)
    xt, yt, dt = _as_tensor(x), _as_tensor(y), _as_tensor(depth)
    xt, yt, dt = torch.broadcast_tensors(xt, yt, dt)
    if (dt.detach() <= 0).any():
        raise ValueError("depth must be strictly positive to unproject")
    X = dt * (xt - K.cx) / K.f
    Y = dt * (yt - K.cy) / K.f
    out = torch.stack([X, Y, dt], dim=-1)
    return out.numpy() if wants_np else out


def warp_forward(x, y, depth, K: CameraIntrinsics, pose: Pose):
    """Forward-warp pixels through a rigid motion.

    Unprojects ``(x, y, depth)``, applies the pose, reprojects, and returns
    ``(x', y', depth')``.  Raises if any warped point ends up at or behind
    the camera (not visible).
    """
    wants_np = _wants_numpy(x, y, depth)
    P = unproject(_as_tensor(x), _as_tensor(y), _as_tensor(depth), K)
    Q = transform_points(P, pose.R, pose.T)
    z = Q[..., 2]
    if (z.detach() <= _EPS_Z).any():
        raise ValueError("warped point is behind the camera and not visible")
    xy = project_points(Q, K)
    if wants_np:
        return xy[..., 0].numpy(), xy[..., 1].numpy(), z.numpy()
    return xy[..., 0], xy[..., 1], z


def pixel_grid(K: CameraIntrinsics, dtype=torch.float64):
    """Return (x, y) coordinate tensors of shape (H, W) for the pixel grid."""
    ys, xs = torch.meshgrid(
        torch.arange(K.height, dtype=dtype),
        torch.arange(K.width, dtype=dtype),
        indexing="ij",
    )
    return xs, ys


def unproject_grid(depth, K: CameraIntrinsics) -> torch.Tensor:
    """Unproject depth maps (..., H, W) to camera-frame points (..., H, W, 3)."""
    dt = _as_tensor(depth)
    if dt.shape[-2:] != (K.height, K.width):
        raise ValueError(
            f"depth shape {tuple(dt.shape)} does not match camera {K.height}x{K.width}"
        )
    xs, ys = pixel_grid(K, dt.dtype if dt.is_floating_point() else torch.float64)
    return unproject(xs, ys, dt, K)


def compute_normals(depth, K: CameraIntrinsics):
    """Per-pixel unit surface normals of depth maps (..., H, W) -> (..., H, W, 3).

    Normals are the normalized cross product of the central-difference
    tangents of the unprojected surface along x and y (one-sided at the
    borders).  A fronto-parallel plane maps to (0, 0, 1).
    """
    wants_np = _wants_numpy(depth)
    P = unproject_grid(depth, K)

    def _diff(t, dim):
        n = t.shape[dim]
        lo = t.narrow(dim, 0, 1)
        hi = t.narrow(dim, n - 1, 1)
        inner = t.narrow(dim, 2, n - 2) - t.narrow(dim, 0, n - 2)
        first = t.narrow(dim, 1, 1) - lo
        last = hi - t.narrow(dim, n - 2, 1)
        return torch.cat([first, inner, last], dim=dim)

    tx = _diff(P, -2)  # tangent along x (columns)
    ty = _diff(P, -3)  # tangent along y (rows)
    n = torch.cross(tx, ty, dim=-1)
    norm = torch.linalg.norm(n, dim=-1, keepdim=True)
    if (norm.detach() < 1e-12).any():
        raise ValueError("degenerate surface: zero-length normal encountered")
    n = n / norm
    return n.numpy() if wants_np else n


def depth_from_raw(raw):
    """Map unconstrained parameters into the open depth box (DEPTH_MIN, DEPTH_MAX)."""
    raw_t = _as_tensor(raw)
    mid = 0.5 * (DEPTH_MIN + DEPTH_MAX)
    half = 0.5 * (DEPTH_MAX - DEPTH_MIN)
    out = mid + half * torch.tanh(raw_t)
    return out.numpy() if _wants_numpy(raw) else out


def raw_from_depth(depth, eps: float = 1e-6):
    """Inverse of depth_from_raw, clipping to the open interval first."""
    d = _as_tensor(depth)
    mid = 0.5 * (DEPTH_MIN + DEPTH_MAX)
    half = 0.5 * (DEPTH_MAX - DEPTH_MIN)
    u = torch.clamp((d - mid) / half, -1.0 + eps, 1.0 - eps)
    out = torch.atanh(u)
    return out.numpy() if _wants_numpy(depth) else out
