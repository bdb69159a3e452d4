"""Differentiable rasterization of a textured mesh into RGB, silhouette and
depth images.

Hybrid gradient scheme: RGB uses hard z-buffered coverage with visibility
held fixed, differentiating through screen-space barycentrics and
perspective-correct UV interpolation; the silhouette is a soft coverage
field (sigmoid of signed distance to the nearest triangle boundary) that
supplies boundary gradients everywhere.  Gaussian blur and Sobel stacks are
linear operators with exact adjoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .autodiff import Var, as_var, custom, stack_last
from .camera import NEAR_PLANE, CameraIntrinsics, ProjectionError
from .mesh import TemplateMesh


class RenderConfigError(ValueError):
    pass


@dataclass
class RenderOutput:
    """One differentiable render: RGB and soft silhouette are graph nodes,
    depth and the rasterization record are plain arrays."""

    rgb: Var                 # (H, W, 3)
    silhouette: Var          # (H, W) soft coverage in [0, 1]
    depth: np.ndarray        # (H, W), 0 on background, scene units
    face_id: np.ndarray      # (H, W) int32, -1 on background
    bary: np.ndarray         # (H, W, 3)
    uv_clamp_count: int

    @property
    def hard_coverage(self) -> np.ndarray:
        return (self.face_id >= 0).astype(np.float64)


def rasterize(
    vertices,
    mesh: TemplateMesh,
    camera: CameraIntrinsics,
    silhouette_softness: float = 0.3,
) -> RenderOutput:
    """Render camera-frame vertices with the template's connectivity/texture."""
    screen = project_points(as_var(vertices), camera)
    rgb, depth, face_id, bary, clamps = _rgb_from_screen(screen, mesh, camera)
    sil = _soft_silhouette_from_screen(
        screen, mesh, camera, silhouette_softness, hard_inside=face_id >= 0
    )
    return RenderOutput(
        rgb=rgb,
        silhouette=sil,
        depth=depth,
        face_id=face_id,
        bary=bary,
        uv_clamp_count=clamps,
    )


def render_silhouette(
    vertices,
    mesh: TemplateMesh,
    camera: CameraIntrinsics,
    softness: float = 0.3,
) -> Var:
    """Soft coverage image alone (sigmoid of signed boundary distance)."""
    screen = project_points(as_var(vertices), camera)
    return _soft_silhouette_from_screen(screen, mesh, camera, softness)


def project_points(points: Var, camera: CameraIntrinsics) -> Var:
    """Differentiable pinhole projection: (V, 3) camera frame -> (V, 3)
    screen (u, v, z)."""
    points = as_var(points)
    val = points.value
    z = val[:, 2]
    behind = z <= NEAR_PLANE
    if np.any(behind):
        idx = int(np.argmax(behind))
        raise ProjectionError(f"vertex behind camera: index {idx}, z={z[idx]:.3g}")
    u = camera.fx * val[:, 0] / z + camera.cx
    v = camera.fy * val[:, 1] / z + camera.cy
    screen = np.stack([u, v, z], axis=1)

    def vjp(g):
        gu, gv, gz = g[:, 0], g[:, 1], g[:, 2]
        gx = gu * camera.fx / z
        gy = gv * camera.fy / z
        gzz = gz - gu * camera.fx * val[:, 0] / (z * z) - gv * camera.fy * val[:, 1] / (z * z)
        return (np.stack([gx, gy, gzz], axis=1),)

    return custom(screen, (points,), vjp, "project")


def _rgb_from_screen(screen: Var, mesh: TemplateMesh, camera: CameraIntrinsics):
    """Hard-rasterized RGB from screen coordinates.

    Visibility (face assignment) is held fixed in the backward pass; the
    gradient flows through barycentrics and perspective-correct UV
    interpolation into (u, v, z) of the covering face's vertices.
    """
    u = screen.value[:, 0]
    v = screen.value[:, 1]
    z = screen.value[:, 2]
    w = 1.0 / z
    height, width = camera.height, camera.width
    faces = np.ascontiguousarray(mesh.faces, dtype=np.int32)

    face_id, bary, wpix = kernels.raster_sweep(
        np.ascontiguousarray(u), np.ascontiguousarray(v), np.ascontiguousarray(w),
        faces, height, width,
    )

    ys, xs = np.nonzero(face_id >= 0)
    fid = face_id[ys, xs]
    tri = mesh.faces[fid].astype(np.int64)          # (P, 3)
    b = bary[ys, xs]                                # (P, 3)
    wk = w[tri]                                     # (P, 3)
    bw = b * wk
    denom = wpix[ys, xs]                            # = bw.sum(axis=1)
    uv_k = mesh.face_uvs[fid]                       # (P, 3, 2)
    uvp = (bw[:, :, None] * uv_k).sum(axis=1) / denom[:, None]

    texture = mesh.texture
    th, tw = texture.shape[0], texture.shape[1]
    clamp_count = int(np.count_nonzero((uvp < -1e-9) | (uvp > 1.0 + 1e-9)))
    tx = uvp[:, 0] * tw - 0.5
    ty = (1.0 - uvp[:, 1]) * th - 0.5
    txc = np.clip(tx, 0.0, tw - 1.0)
    tyc = np.clip(ty, 0.0, th - 1.0)
    x0 = np.minimum(np.floor(txc), tw - 2).astype(np.int64)
    y0 = np.minimum(np.floor(tyc), th - 2).astype(np.int64)
    fx = txc - x0
    fy = tyc - y0
    c00 = texture[y0, x0]
    c01 = texture[y0, x0 + 1]
    c10 = texture[y0 + 1, x0]
    c11 = texture[y0 + 1, x0 + 1]
    top = c00 * (1.0 - fx[:, None]) + c01 * fx[:, None]
    bot = c10 * (1.0 - fx[:, None]) + c11 * fx[:, None]
    rgb_p = top * (1.0 - fy[:, None]) + bot * fy[:, None]

    rgb = np.zeros((height, width, 3), dtype=np.float64)
    rgb[ys, xs] = rgb_p
    depth = np.zeros((height, width), dtype=np.float64)
    depth[ys, xs] = 1.0 / denom

    px = xs + 0.5
    py = ys + 0.5
    u0, u1, u2 = u[tri[:, 0]], u[tri[:, 1]], u[tri[:, 2]]
    v0, v1, v2 = v[tri[:, 0]], v[tri[:, 1]], v[tri[:, 2]]
    area = (u1 - u0) * (v2 - v0) - (v1 - v0) * (u2 - u0)
    # Texel-cell clamp: no gradient once the sample is pinned to the border.
    live_x = (tx > 0.0) & (tx < tw - 1.0)
    live_y = (ty > 0.0) & (ty < th - 1.0)

    def vjp(g):
        gp = g[ys, xs]                                   # (P, 3)
        d_fx = ((c01 - c00) * (1.0 - fy[:, None]) + (c11 - c10) * fy[:, None])
        d_fy = bot - top
        gtx = (gp * d_fx).sum(axis=1) * live_x
        gty = (gp * d_fy).sum(axis=1) * live_y
        gu_uv = gtx * tw                                  # dL/d(uvp_x)
        gv_uv = -gty * th                                 # dL/d(uvp_y)
        s = np.stack([gu_uv, gv_uv], axis=1)              # (P, 2)

        # uvp = sum_k (b_k w_k) uv_k / sum_k (b_k w_k)
        d_bw = ((uv_k - uvp[:, None, :]) * s[:, None, :]).sum(axis=2) / denom[:, None]
        gb = d_bw * wk                                    # dL/db_k, (P, 3)
        gw = d_bw * b                                     # dL/dw_k
        gz = -gw / (z[tri] ** 2)

        # b0 = A0/A, b1 = A1/A, b2 = 1 - b0 - b1  (independent vars b0, b1).
        t0 = (gb[:, 0] - gb[:, 2]) / area
        t1 = (gb[:, 1] - gb[:, 2]) / area
        ga = -(b[:, 0] * (gb[:, 0] - gb[:, 2]) + b[:, 1] * (gb[:, 1] - gb[:, 2])) / area

        gu_k = np.empty_like(gb)
        gv_k = np.empty_like(gb)
        # A0 = (u1-px)(v2-py) - (v1-py)(u2-px)
        gu_k[:, 0] = t1 * (py - v2) + ga * (v1 - v2)
        gv_k[:, 0] = t1 * (u2 - px) + ga * (u2 - u1)
        gu_k[:, 1] = t0 * (v2 - py) + ga * (v2 - v0)
        gv_k[:, 1] = t0 * (px - u2) + ga * (u0 - u2)
        gu_k[:, 2] = t0 * (py - v1) + t1 * (v0 - py) + ga * (v0 - v1)
        gv_k[:, 2] = t0 * (u1 - px) + t1 * (px - u0) + ga * (u1 - u0)

        gscreen = np.zeros_like(screen.value)
        np.add.at(gscreen[:, 0], tri, gu_k)
        np.add.at(gscreen[:, 1], tri, gv_k)
        np.add.at(gscreen[:, 2], tri, gz)
        return (gscreen,)

    rgb_var = custom(rgb, (screen,), vjp, "rasterize_rgb")
    return rgb_var, depth, face_id, bary, clamp_count


def _soft_silhouette_from_screen(
    screen: Var,
    mesh: TemplateMesh,
    camera: CameraIntrinsics,
    softness: float,
    hard_inside: np.ndarray | None = None,
) -> Var:
    """Soft coverage: sigmoid of the signed distance to the mesh border.

    The distance is the minimum over the template's border edges in screen
    space, signed by hard coverage (positive inside).  Deep interior pixels
    saturate to 1 regardless of triangle density; boundary gradients flow to
    the border-edge vertices.  The coverage sign is held fixed in the
    backward pass (like visibility in the RGB path); the distance factor
    vanishes at the rim, so the field stays continuous there.
    """
    if softness <= 0.0:
        raise RenderConfigError("silhouette softness must be positive")
    u = np.ascontiguousarray(screen.value[:, 0])
    v = np.ascontiguousarray(screen.value[:, 1])
    radius = 10.0 * softness + 2.0
    dist, argedge = kernels.border_distance_sweep(
        u, v, mesh.border_edges, camera.height, camera.width, radius
    )
    if hard_inside is None:
        w = np.ascontiguousarray(1.0 / screen.value[:, 2])
        faces = np.ascontiguousarray(mesh.faces, dtype=np.int32)
        face_id, _, _ = kernels.raster_sweep(u, v, w, faces, camera.height, camera.width)
        hard_inside = face_id >= 0
    sign = np.where(hard_inside, 1.0, -1.0)
    coverage = _sigmoid(sign * dist / softness)

    def vjp(g):
        active = (argedge >= 0) & (g != 0.0)
        ys, xs = np.nonzero(active)
        gscreen = np.zeros_like(screen.value)
        if ys.size == 0:
            return (gscreen,)
        eid = argedge[ys, xs]
        ia = mesh.border_edges[eid, 0].astype(np.int64)
        ib = mesh.border_edges[eid, 1].astype(np.int64)
        px = xs + 0.5
        py = ys + 0.5
        ax, ay = u[ia], v[ia]
        bx, by = u[ib], v[ib]
        ex, ey = bx - ax, by - ay
        l2 = np.maximum(ex * ex + ey * ey, 1e-24)
        t = np.clip(((px - ax) * ex + (py - ay) * ey) / l2, 0.0, 1.0)
        qx = ax + t * ex
        qy = ay + t * ey
        d = dist[ys, xs]
        safe = np.maximum(d, 1e-12)
        nx = (px - qx) / safe
        ny = (py - qy) / safe
        live = d > 1e-12
        s = sign[ys, xs]
        sig = coverage[ys, xs]
        gd = g[ys, xs] * sig * (1.0 - sig) * s / softness * live
        np.add.at(gscreen[:, 0], ia, gd * (-(1.0 - t)) * nx)
        np.add.at(gscreen[:, 1], ia, gd * (-(1.0 - t)) * ny)
        np.add.at(gscreen[:, 0], ib, gd * (-t) * nx)
        np.add.at(gscreen[:, 1], ib, gd * (-t) * ny)
        return (gscreen,)

    return custom(coverage, (screen,), vjp, "soft_silhouette")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# ---------------------------------------------------------------------------
# Linear image operators (blur, Sobel)
# ---------------------------------------------------------------------------

_SOBEL_SMOOTH = np.array([1.0, 2.0, 1.0])
_SOBEL_DERIV = np.array([-1.0, 0.0, 1.0])


def gaussian_blur(image, sigma: float):
    """Separable Gaussian blur, kernel radius ceil(3*sigma), normalized to
    sum 1, reflect padding.  Accepts a Var or a plain array."""
    if sigma <= 0.0:
        raise RenderConfigError("blur sigma must be positive")
    k = _gauss_kernel(sigma)
    out = correlate_reflect(image, k, axis=0)
    return correlate_reflect(out, k, axis=1)


def sobel(image, order: int = 1):
    """Sobel gradient stack along a new last axis.

    Order 1 gives {Gx, Gy} from the unnormalized 3x3 kernels (correlation
    convention, reflect padding); order 2 composes first-order passes into
    {Gxx, Gxy, Gyy}.
    """
    shape = image.value.shape if isinstance(image, Var) else np.shape(image)
    if shape[0] < 3 or shape[1] < 3:
        raise RenderConfigError("image too small for Sobel (need H, W >= 3)")
    if order == 1:
        gx = _sobel_x(image)
        gy = _sobel_y(image)
        return _stack(image, [gx, gy])
    if order == 2:
        gx = _sobel_x(image)
        gy = _sobel_y(image)
        gxx = _sobel_x(gx)
        gxy = _sobel_y(gx)
        gyy = _sobel_y(gy)
        return _stack(image, [gxx, gxy, gyy])
    raise RenderConfigError("sobel order must be 1 or 2")


def _sobel_x(image):
    out = correlate_reflect(image, _SOBEL_DERIV, axis=1)
    return correlate_reflect(out, _SOBEL_SMOOTH, axis=0)


def _sobel_y(image):
    out = correlate_reflect(image, _SOBEL_SMOOTH, axis=1)
    return correlate_reflect(out, _SOBEL_DERIV, axis=0)


def _stack(image, items):
    if isinstance(image, Var):
        return stack_last(items)
    return np.stack(items, axis=-1)


def _gauss_kernel(sigma: float) -> np.ndarray:
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def correlate_reflect(x, kernel: np.ndarray, axis: int):
    """1-D correlation along ``axis`` with reflect padding; linear, with an
    exact adjoint (zero-pad correlation with the flipped kernel followed by
    folding the pad back through the reflection map)."""
    kernel = np.asarray(kernel, dtype=np.float64)
    if isinstance(x, Var):
        val = _correlate_forward(x.value, kernel, axis)

        def vjp(g):
            return (_correlate_adjoint(g, kernel, axis),)

        return custom(val, (x,), vjp, "correlate")
    return _correlate_forward(np.asarray(x, dtype=np.float64), kernel, axis)


def _correlate_forward(x: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    r = len(kernel) // 2
    n = x.shape[axis]
    if n <= r:
        raise RenderConfigError(
            f"image too small along axis {axis} for kernel radius {r}"
        )
    xm = np.moveaxis(x, axis, 0)
    pad = [(r, r)] + [(0, 0)] * (xm.ndim - 1)
    xp = np.pad(xm, pad, mode="reflect")
    out = np.zeros_like(xm)
    for j, kj in enumerate(kernel):
        out += kj * xp[j : j + n]
    return np.moveaxis(out, 0, axis)


def _correlate_adjoint(g: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    r = len(kernel) // 2
    gm = np.moveaxis(g, axis, 0)
    n = gm.shape[0]
    zp = np.zeros((n + 2 * r,) + gm.shape[1:], dtype=np.float64)
    for j, kj in enumerate(kernel):
        zp[j : j + n] += kj * gm
    core = zp[r : r + n].copy()
    for i in range(r):
        core[r - i] += zp[i]                     # left reflect fold
        core[n - 2 - i] += zp[r + n + i]         # right reflect fold
    return np.moveaxis(core, 0, axis)
