"""Differentiable height-field rendering.

A depth map is turned into a triangle mesh (two triangles per pixel quad),
rigidly transformed, and rasterized with a hard z-buffer.  Visibility is
resolved in a non-differentiable first pass; a second pass recomputes the
winning fragments differentiably, so gradients flow through surface
position, texture coordinates, and shading in the interior of surfaces but
not across silhouette boundaries (no soft edges).  Barycentric weights are
computed in screen space, which ignores perspective distortion within a
triangle; at one triangle per half pixel quad the approximation error is
negligible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .camera import (
    CameraIntrinsics,
    Pose,
    Viewpoint,
    _as_tensor,
    _wants_numpy,
    compute_normals,
    pose_tensors_from_viewpoint,
    transform_points,
    unproject_grid,
)
from .shading import Lighting, lighting_values_from_raw, shade_values
from . import shading as _shading
from . import camera as _camera

_EPS_Z = 1e-8
_EPS_DENOM = 1e-12
_EPS_BBOX = 1e-6
_NO_FACE = torch.iinfo(torch.int64).max


@dataclass
class TriangleMesh:
    """Camera-frame triangle mesh with per-vertex texture coordinates."""

    vertices: torch.Tensor  # (V, 3)
    uv: torch.Tensor  # (V, 2) source-pixel coordinates
    faces: torch.Tensor  # (F, 3) int64 vertex indices


@dataclass
class RenderOutput:
    """Rasterization result; tensors stay differentiable where applicable."""

    image: torch.Tensor  # (H, W, C)
    depth: torch.Tensor  # (H, W) z of the visible surface, 0 where uncovered
    coverage: torch.Tensor  # (H, W) hard 0/1 mask, detached


def grid_faces(height: int, width: int, valid=None) -> torch.Tensor:
    """Triangle indices for a (height x width) vertex grid.

    Each pixel quad is split along the diagonal from (i, j) to (i+1, j+1),
    giving 2 * (height-1) * (width-1) triangles in a fixed order.  ``valid``
    optionally marks vertices; faces touching an invalid vertex are dropped.
    """
    if height < 2 or width < 2:
        raise ValueError(f"need at least a 2x2 grid to mesh, got {height}x{width}")
    r = torch.arange(height - 1, dtype=torch.int64)
    c = torch.arange(width - 1, dtype=torch.int64)
    v00 = (r[:, None] * width + c[None, :]).reshape(-1)
    v01 = v00 + 1
    v10 = v00 + width
    v11 = v10 + 1
    tri1 = torch.stack([v00, v10, v11], dim=-1)
    tri2 = torch.stack([v00, v11, v01], dim=-1)
    faces = torch.stack([tri1, tri2], dim=1).reshape(-1, 3)
    if valid is not None:
        vmask = _as_tensor(valid).reshape(-1) > 0.5
        keep = vmask[faces].all(dim=-1)
        faces = faces[keep]
    return faces


def depth_to_mesh(depth, K: CameraIntrinsics, valid=None) -> TriangleMesh:
    """Mesh a depth map; texture coordinates are the source pixel centers.

    When ``valid`` is given, faces touching an invalid vertex are dropped and
    the depth at invalid pixels is ignored (it may be zero, e.g. the empty
    region of a rendered depth map).
    """
    dt = _as_tensor(depth)
    if dt.shape != (K.height, K.width):
        raise ValueError(
            f"depth shape {tuple(dt.shape)} does not match camera {K.height}x{K.width}"
        )
    if valid is not None:
        keep = _as_tensor(valid).reshape(dt.shape) > 0.5
        dt = torch.where(keep, dt, torch.ones_like(dt))
    verts = unproject_grid(dt, K).reshape(-1, 3)
    xs, ys = _camera.pixel_grid(K, verts.dtype)
    uv = torch.stack([xs, ys], dim=-1).reshape(-1, 2)
    faces = grid_faces(K.height, K.width, valid)
    return TriangleMesh(verts, uv, faces)


def _bilinear(textures: torch.Tensor, batch_idx: torch.Tensor, uv: torch.Tensor) -> torch.Tensor:
    """Sample textures (B, Ht, Wt, C) at continuous uv (N, 2), edge-clamped."""
    Ht, Wt = textures.shape[-3], textures.shape[-2]
    u = uv[:, 0].clamp(0.0, Wt - 1.0)
    v = uv[:, 1].clamp(0.0, Ht - 1.0)
    x0 = u.detach().floor().clamp(0.0, max(Wt - 2, 0))
    y0 = v.detach().floor().clamp(0.0, max(Ht - 2, 0))
    fx = (u - x0).unsqueeze(-1)
    fy = (v - y0).unsqueeze(-1)
    x0l, y0l = x0.long(), y0.long()
    x1l = (x0l + 1).clamp(max=Wt - 1)
    y1l = (y0l + 1).clamp(max=Ht - 1)
    if textures.dim() == 3:
        t00 = textures[y0l, x0l]
        t01 = textures[y0l, x1l]
        t10 = textures[y1l, x0l]
        t11 = textures[y1l, x1l]
    else:
        t00 = textures[batch_idx, y0l, x0l]
        t01 = textures[batch_idx, y0l, x1l]
        t10 = textures[batch_idx, y1l, x0l]
        t11 = textures[batch_idx, y1l, x1l]
    top = (1.0 - fx) * t00 + fx * t01
    bot = (1.0 - fx) * t10 + fx * t11
    return (1.0 - fy) * top + fy * bot


def _barycentric(px, py, ax, ay, bx, by, cx, cy):
    """Screen-space barycentric weights of point P in triangle (A, B, C).

    Signed-area ratios; consistent for either winding.  Returns the weights
    and the signed denominator (twice the triangle area).
    """
    denom = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    safe = torch.where(denom.abs() < _EPS_DENOM, torch.ones_like(denom), denom)
    la = ((bx - px) * (cy - py) - (by - py) * (cx - px)) / safe
    lb = ((cx - px) * (ay - py) - (cy - py) * (ax - px)) / safe
    lc = ((ax - px) * (by - py) - (ay - py) * (bx - px)) / safe
    return la, lb, lc, denom


def rasterize_batch(
    verts: torch.Tensor,
    uv: torch.Tensor,
    faces: torch.Tensor,
    textures: torch.Tensor,
    K: CameraIntrinsics,
    background: float = 0.5,
):
    """Rasterize camera-frame vertices over a batch of scenes.

    Args:
        verts: (B, V, 3) or (V, 3) camera-frame vertex positions (already
            transformed by any pose).
        uv: (V, 2) texture coordinates shared across the batch.
        faces: (F, 3) int64, shared across the batch.
        textures: (B, Ht, Wt, C) or (Ht, Wt, C).
        K: output camera; the image is K.height x K.width.
        background: fill value for uncovered pixels (all channels).

    Returns:
        (images (B, H, W, C), depths (B, H, W), coverage (B, H, W)).

    Visibility is a hard per-pixel nearest-fragment test: ties in depth are
    broken toward the lowest triangle index.  The winner search runs without
    gradients; winning fragments are then recomputed differentiably.
    """
    if faces.numel() == 0:
        raise ValueError("mesh has no triangles")
    if verts.dim() == 2:
        verts = verts.unsqueeze(0)
    B, V, _ = verts.shape
    F = faces.shape[0]
    H, W = K.height, K.width
    C = textures.shape[-1]
    dtype = verts.dtype

    z_all = verts[..., 2]  # (B, V)
    with torch.no_grad():
        zc = z_all.clamp(min=_EPS_Z)
        x2d = K.f * verts[..., 0] / zc + K.cx
        y2d = K.f * verts[..., 1] / zc + K.cy
        fz = z_all[:, faces]  # (B, F, 3)
        zok = (fz > _EPS_Z).all(dim=-1)
        if not zok.any(dim=-1).all():
            raise ValueError("all geometry is behind the camera")
        fx = x2d[:, faces]
        fy = y2d[:, faces]
        # Integer pixel bbox per face, clipped to the image.  The bbox is a
        # candidate filter only — the barycentric test below decides coverage
        # — so it is padded by a sub-pixel epsilon: without it, a vertex that
        # projection roundoff lands a few ulp past a pixel center would drop
        # that pixel from the candidate set even though the inside test
        # accepts it.
        x0 = (fx.min(-1).values - _EPS_BBOX).clamp(-1.0, W).ceil().long().clamp(min=0)
        x1 = (fx.max(-1).values + _EPS_BBOX).clamp(-1.0, W).floor().long().clamp(max=W - 1)
        y0 = (fy.min(-1).values - _EPS_BBOX).clamp(-1.0, H).ceil().long().clamp(min=0)
        y1 = (fy.max(-1).values + _EPS_BBOX).clamp(-1.0, H).floor().long().clamp(max=H - 1)
        cw = (x1 - x0 + 1).clamp(min=0)
        ch = (y1 - y0 + 1).clamp(min=0)
        counts = torch.where(zok, cw * ch, torch.zeros_like(cw)).reshape(-1)

        gidx = torch.repeat_interleave(torch.arange(B * F), counts)
        starts = torch.cumsum(counts, 0) - counts
        k = torch.arange(gidx.numel()) - starts[gidx]
        cw_g = cw.reshape(-1)[gidx]
        px = x0.reshape(-1)[gidx] + k % cw_g
        py = y0.reshape(-1)[gidx] + k // cw_g
        b_g = gidx // F
        f_g = gidx % F
        vi = faces[f_g]  # (N, 3)
        ax, bx_, cx_ = (x2d[b_g, vi[:, i]] for i in range(3))
        ay, by_, cy_ = (y2d[b_g, vi[:, i]] for i in range(3))
        la, lb, lc, denom = _barycentric(
            px.to(dtype), py.to(dtype), ax, ay, bx_, by_, cx_, cy_
        )
        zv = z_all[b_g.unsqueeze(1), vi]  # (N, 3)
        zcand = la * zv[:, 0] + lb * zv[:, 1] + lc * zv[:, 2]
        ok = (
            (denom.abs() > _EPS_DENOM)
            & (la >= 0.0)
            & (lb >= 0.0)
            & (lc >= 0.0)
            & (zcand > _EPS_Z)
        )
        px, py, b_g, f_g, zcand = px[ok], py[ok], b_g[ok], f_g[ok], zcand[ok]
        pix = (b_g * H + py) * W + px

        # nearest fragment per pixel; ties -> lowest triangle index
        zbuf = torch.full((B * H * W,), float("inf"), dtype=dtype)
        zbuf.scatter_reduce_(0, pix, zcand, reduce="amin", include_self=True)
        tie = zcand == zbuf[pix]
        winbuf = torch.full((B * H * W,), _NO_FACE, dtype=torch.int64)
        winbuf.scatter_reduce_(0, pix[tie], f_g[tie], reduce="amin", include_self=True)
        covered = winbuf != _NO_FACE
        lin = covered.nonzero(as_tuple=False).squeeze(1)

    # differentiable recomputation of the winning fragments
    b2 = lin // (H * W)
    rem = lin % (H * W)
    py2 = rem // W
    px2 = rem % W
    vi2 = faces[winbuf[lin]]  # (N2, 3)
    pts = verts[b2.unsqueeze(1), vi2]  # (N2, 3, 3)
    z2 = pts[..., 2]
    x2 = K.f * pts[..., 0] / z2 + K.cx
    y2 = K.f * pts[..., 1] / z2 + K.cy
    la2, lb2, lc2, _ = _barycentric(
        px2.to(dtype),
        py2.to(dtype),
        x2[:, 0],
        y2[:, 0],
        x2[:, 1],
        y2[:, 1],
        x2[:, 2],
        y2[:, 2],
    )
    zpix = la2 * z2[:, 0] + lb2 * z2[:, 1] + lc2 * z2[:, 2]
    uvv = uv[vi2]  # (N2, 3, 2)
    uvpix = (
        la2.unsqueeze(-1) * uvv[:, 0]
        + lb2.unsqueeze(-1) * uvv[:, 1]
        + lc2.unsqueeze(-1) * uvv[:, 2]
    )
    color = _bilinear(textures, b2, uvpix)

    images = torch.full((B, H, W, C), float(background), dtype=dtype)
    images = images.index_put((b2, py2, px2), color)
    depths = torch.zeros((B, H, W), dtype=dtype)
    depths = depths.index_put((b2, py2, px2), zpix)
    coverage = covered.reshape(B, H, W).to(dtype)
    return images, depths, coverage


def rasterize(
    mesh: TriangleMesh,
    texture,
    K: CameraIntrinsics,
    pose: Pose | None = None,
    background: float = 0.5,
) -> RenderOutput:
    """Rasterize a mesh under a rigid pose into the camera ``K``."""
    tex = _as_tensor(texture)
    if tex.dim() != 3:
        raise ValueError(f"texture must be (H, W, C), got shape {tuple(tex.shape)}")
    verts = mesh.vertices
    if pose is not None:
        verts = transform_points(verts, pose.R, pose.T)
    images, depths, coverage = rasterize_batch(
        verts, mesh.uv, mesh.faces, tex, K, background
    )
    return RenderOutput(images[0], depths[0], coverage[0])


def _viewpoint_tensor(viewpoint) -> torch.Tensor:
    if isinstance(viewpoint, Viewpoint):
        viewpoint.check_bounds()
        return _as_tensor(viewpoint.as_array())
    v = _as_tensor(viewpoint)
    if v.shape[-1] != 6:
        raise ValueError(f"viewpoint must have 6 components, got shape {tuple(v.shape)}")
    return v


def _lighting_tensor(lighting) -> torch.Tensor:
    if isinstance(lighting, Lighting):
        return _as_tensor(lighting.as_array())
    l = _as_tensor(lighting)
    if l.shape[-1] != 4:
        raise ValueError(f"lighting must have 4 components, got shape {tuple(l.shape)}")
    return l


def render_batch(
    depth,
    albedo,
    viewpoints,
    lightings,
    K: CameraIntrinsics,
    background: float = 0.5,
):
    """Render one surface under a batch of viewpoints and lightings.

    Args:
        depth: (H, W) shared surface, or (B, H, W) for per-sample surfaces.
        albedo: (H, W, C) shared reflectance, or (B, H, W, C).
        viewpoints: (B, 6) viewpoint parameter tensor.
        lightings: (B, 4) lighting values (lx, ly, ks, kd).
        K, background: as in rasterize_batch.

    Returns (images (B, H, W, C), depths, coverage).  Differentiable in all
    tensor inputs.
    """
    d = _as_tensor(depth)
    a = _as_tensor(albedo)
    v = _as_tensor(viewpoints)
    l = _as_tensor(lightings)
    normals = compute_normals(d, K)
    shaded = shade_values(a, normals, l[..., 0], l[..., 1], l[..., 2], l[..., 3])
    if shaded.dim() == 3:
        shaded = shaded.unsqueeze(0)
    verts = unproject_grid(d, K).reshape(*d.shape[:-2], K.height * K.width, 3)
    xs, ys = _camera.pixel_grid(K, verts.dtype)
    uv = torch.stack([xs, ys], dim=-1).reshape(-1, 2)
    faces = grid_faces(K.height, K.width)
    R, T = pose_tensors_from_viewpoint(v)
    verts = transform_points(verts, R, T)
    return rasterize_batch(verts, uv, faces, shaded, K, background)


def render(
    depth,
    albedo,
    viewpoint=None,
    lighting=None,
    K: CameraIntrinsics | None = None,
    background: float = 0.5,
) -> RenderOutput:
    """Render a depth/albedo pair under a viewpoint and lighting.

    ``viewpoint`` defaults to the canonical view (identity pose) and
    ``lighting`` to the canonical pure-ambient lighting, under which the
    output image equals the albedo over covered pixels.  Accepts dataclass
    or raw tensor parameters; tensor parameters stay differentiable.
    """
    if K is None:
        raise ValueError("render requires camera intrinsics")
    v = _viewpoint_tensor(viewpoint if viewpoint is not None else Viewpoint())
    l = _lighting_tensor(lighting if lighting is not None else _shading.CANONICAL_LIGHTING)
    images, depths, coverage = render_batch(
        _as_tensor(depth), _as_tensor(albedo), v.reshape(1, 6), l.reshape(1, 4), K, background
    )
    return RenderOutput(images[0], depths[0], coverage[0])


def warp_mask(mask, depth, viewpoint, K: CameraIntrinsics):
    """Warp a binary mask by rendering it as a texture over the surface.

    Returns a boolean (H, W) array/tensor: rasterized mask values
    thresholded at 0.5, zero where the warped surface leaves the frame.
    """
    wants_np = _wants_numpy(mask, depth)
    m = _as_tensor(mask).to(torch.float64)
    if m.dim() != 2:
        raise ValueError(f"mask must be (H, W), got shape {tuple(m.shape)}")
    d = _as_tensor(depth)
    v = _viewpoint_tensor(viewpoint)
    mesh = depth_to_mesh(d, K)
    R, T = pose_tensors_from_viewpoint(v)
    verts = transform_points(mesh.vertices, R, T)
    images, _, coverage = rasterize_batch(
        verts, mesh.uv, mesh.faces, m.unsqueeze(-1), K, background=0.0
    )
    out = (images[0, ..., 0] >= 0.5) & (coverage[0] > 0.5)
    return out.numpy() if wants_np else out


def render_gradients(
    depth_raw,
    albedo_raw,
    viewpoint,
    lighting_raw,
    K: CameraIntrinsics,
    cotangent,
    background: float = 0.5,
) -> dict:
    """Pull a loss cotangent on the rendered image back to raw parameters.

    Raw parameters are mapped through their squashing functions (tanh box
    for depth, sigmoid for albedo, tanh strengths for lighting) before
    rendering; the returned dict holds gradients of ``sum(image * cotangent)``
    with respect to each raw input, as numpy arrays.
    """
    d_raw = _as_tensor(depth_raw).clone().requires_grad_(True)
    a_raw = _as_tensor(albedo_raw).clone().requires_grad_(True)
    v = _as_tensor(
        viewpoint.as_array() if isinstance(viewpoint, Viewpoint) else viewpoint
    ).clone().requires_grad_(True)
    l_raw = _as_tensor(lighting_raw).clone().requires_grad_(True)
    cot = _as_tensor(cotangent)

    depth = _camera.depth_from_raw(d_raw)
    albedo = _shading.albedo_from_raw(a_raw)
    light = lighting_values_from_raw(l_raw)
    images, _, _ = render_batch(
        depth, albedo, v.reshape(1, 6), light.reshape(1, 4), K, background
    )
    loss = (images[0] * cot).sum()
    grads = torch.autograd.grad(loss, [d_raw, a_raw, v, l_raw], allow_unused=True)
    names = ["depth_raw", "albedo_raw", "viewpoint", "lighting_raw"]
    out = {}
    for name, ref, g in zip(names, [d_raw, a_raw, v, l_raw], grads):
        out[name] = (g if g is not None else torch.zeros_like(ref)).detach().numpy()
    return out
