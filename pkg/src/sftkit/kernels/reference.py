"""Pure-numpy reference implementation of the per-pixel sweep kernels.

These are the two hot loops of the renderer: the z-buffered coverage sweep
and the signed-distance sweep behind the soft silhouette.  The compiled
backend in ``_sweeps.pyx`` evaluates the same expressions in the same order,
so both backends agree to the last bit on non-degenerate inputs.
"""

from __future__ import annotations

import math

import numpy as np

DEGENERATE_AREA = 1e-12


def raster_sweep(u, v, w, faces, height, width):
    """Z-buffered triangle coverage.

    Parameters are per-vertex screen columns ``u``, rows ``v`` (pixel units,
    pixel centers at integer + 0.5) and inverse depths ``w = 1/z``.  Returns
    ``(face_id, bary, wpix)`` where ``face_id`` is -1 on background, ``bary``
    holds the screen-space barycentrics of the winning (nearest) face and
    ``wpix`` its interpolated inverse depth.  Ties keep the lower face index.
    """
    face_id = np.full((height, width), -1, dtype=np.int32)
    bary = np.zeros((height, width, 3), dtype=np.float64)
    wpix = np.zeros((height, width), dtype=np.float64)

    for f in range(faces.shape[0]):
        i0, i1, i2 = faces[f]
        u0, u1, u2 = u[i0], u[i1], u[i2]
        v0, v1, v2 = v[i0], v[i1], v[i2]
        area = (u1 - u0) * (v2 - v0) - (v1 - v0) * (u2 - u0)
        if abs(area) < DEGENERATE_AREA:
            continue
        inv_area = 1.0 / area
        x_lo = max(0, int(math.ceil(min(u0, u1, u2) - 0.5)))
        x_hi = min(width - 1, int(math.floor(max(u0, u1, u2) - 0.5)))
        y_lo = max(0, int(math.ceil(min(v0, v1, v2) - 0.5)))
        y_hi = min(height - 1, int(math.floor(max(v0, v1, v2) - 0.5)))
        if x_lo > x_hi or y_lo > y_hi:
            continue
        px = np.arange(x_lo, x_hi + 1, dtype=np.float64)[None, :] + 0.5
        py = np.arange(y_lo, y_hi + 1, dtype=np.float64)[:, None] + 0.5
        b0 = ((u1 - px) * (v2 - py) - (v1 - py) * (u2 - px)) * inv_area
        b1 = ((px - u0) * (v2 - v0) - (py - v0) * (u2 - u0)) * inv_area
        b2 = 1.0 - b0 - b1
        inside = (b0 >= 0.0) & (b1 >= 0.0) & (b2 >= 0.0)
        if not inside.any():
            continue
        wp = b0 * w[i0] + b1 * w[i1] + b2 * w[i2]
        win = (slice(y_lo, y_hi + 1), slice(x_lo, x_hi + 1))
        upd = inside & (wp > wpix[win])
        face_id[win][upd] = f
        wpix[win][upd] = wp[upd]
        bary[win + (0,)][upd] = b0[upd]
        bary[win + (1,)][upd] = b1[upd]
        bary[win + (2,)][upd] = b2[upd]
    return face_id, bary, wpix


# Distance assigned where no border edge was evaluated; far enough that the
# sigmoid saturates exactly.
FAR_DISTANCE = 1e6


def border_distance_sweep(u, v, edges, height, width, radius):
    """Per-pixel distance to the nearest mesh border edge, in pixels.

    Each edge only touches pixels within its bounding box dilated by
    ``radius``; farther pixels keep ``FAR_DISTANCE`` (the caller chooses the
    radius so the truncated sigmoid tail is negligible).  Returns
    ``(dist, argedge)`` with ``argedge = -1`` where nothing was evaluated.
    Ties keep the lower edge index.
    """
    dist = np.full((height, width), FAR_DISTANCE, dtype=np.float64)
    argedge = np.full((height, width), -1, dtype=np.int32)

    for e in range(edges.shape[0]):
        ia, ib = edges[e]
        ax, ay = u[ia], v[ia]
        bx, by = u[ib], v[ib]
        x_lo = max(0, int(math.ceil(min(ax, bx) - 0.5 - radius)))
        x_hi = min(width - 1, int(math.floor(max(ax, bx) - 0.5 + radius)))
        y_lo = max(0, int(math.ceil(min(ay, by) - 0.5 - radius)))
        y_hi = min(height - 1, int(math.floor(max(ay, by) - 0.5 + radius)))
        if x_lo > x_hi or y_lo > y_hi:
            continue
        px = np.arange(x_lo, x_hi + 1, dtype=np.float64)[None, :] + 0.5
        py = np.arange(y_lo, y_hi + 1, dtype=np.float64)[:, None] + 0.5
        d = np.sqrt(_segment_dist2(px, py, ax, ay, bx, by))
        win = (slice(y_lo, y_hi + 1), slice(x_lo, x_hi + 1))
        upd = d < dist[win]
        dist[win][upd] = d[upd]
        argedge[win][upd] = e
    return dist, argedge


def _segment_dist2(px, py, ax, ay, bx, by):
    ex = bx - ax
    ey = by - ay
    l2 = ex * ex + ey * ey
    if l2 < 1e-24:
        dx = px - ax
        dy = py - ay
        return dx * dx + dy * dy
    t = ((px - ax) * ex + (py - ay) * ey) / l2
    t = np.clip(t, 0.0, 1.0)
    qx = ax + t * ex
    qy = ay + t * ey
    dx = px - qx
    dy = py - qy
    return dx * dx + dy * dy
