# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-pixel sweep kernels.

Arithmetic mirrors ``reference.py`` expression by expression (and the build
disables FP contraction), so the two backends produce bit-identical sweeps.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, floor, sqrt

cnp.import_array()

DEF DEGENERATE_AREA = 1e-12


cdef inline double _seg_dist2(double px, double py, double ax, double ay,
                              double bx, double by) nogil:
    cdef double ex = bx - ax
    cdef double ey = by - ay
    cdef double l2 = ex * ex + ey * ey
    cdef double dx, dy, t, qx, qy
    if l2 < 1e-24:
        dx = px - ax
        dy = py - ay
        return dx * dx + dy * dy
    t = ((px - ax) * ex + (py - ay) * ey) / l2
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    qx = ax + t * ex
    qy = ay + t * ey
    dx = px - qx
    dy = py - qy
    return dx * dx + dy * dy


cdef inline double _min3(double a, double b, double c) nogil:
    cdef double m = a
    if b < m:
        m = b
    if c < m:
        m = c
    return m


cdef inline double _max3(double a, double b, double c) nogil:
    cdef double m = a
    if b > m:
        m = b
    if c > m:
        m = c
    return m


def raster_sweep(double[::1] u, double[::1] v, double[::1] w,
                 int[:, ::1] faces, int height, int width):
    face_id_arr = np.full((height, width), -1, dtype=np.int32)
    bary_arr = np.zeros((height, width, 3), dtype=np.float64)
    wpix_arr = np.zeros((height, width), dtype=np.float64)
    cdef int[:, ::1] face_id = face_id_arr
    cdef double[:, :, ::1] bary = bary_arr
    cdef double[:, ::1] wpix = wpix_arr

    cdef Py_ssize_t f, i0, i1, i2, ix, iy
    cdef int x_lo, x_hi, y_lo, y_hi
    cdef double u0, u1, u2, v0, v1, v2, w0, w1, w2
    cdef double area, inv_area, px, py, b0, b1, b2, wp
    cdef double xld, xhd, yld, yhd

    for f in range(faces.shape[0]):
        i0 = faces[f, 0]
        i1 = faces[f, 1]
        i2 = faces[f, 2]
        u0 = u[i0]; u1 = u[i1]; u2 = u[i2]
        v0 = v[i0]; v1 = v[i1]; v2 = v[i2]
        w0 = w[i0]; w1 = w[i1]; w2 = w[i2]
        area = (u1 - u0) * (v2 - v0) - (v1 - v0) * (u2 - u0)
        if area < DEGENERATE_AREA and area > -DEGENERATE_AREA:
            continue
        inv_area = 1.0 / area
        # Clamp in double before casting so huge projected coordinates
        # cannot overflow the int range.
        xld = ceil(_min3(u0, u1, u2) - 0.5)
        xhd = floor(_max3(u0, u1, u2) - 0.5)
        yld = ceil(_min3(v0, v1, v2) - 0.5)
        yhd = floor(_max3(v0, v1, v2) - 0.5)
        if xld < 0.0:
            xld = 0.0
        if xhd > width - 1.0:
            xhd = width - 1.0
        if yld < 0.0:
            yld = 0.0
        if yhd > height - 1.0:
            yhd = height - 1.0
        if xld > xhd or yld > yhd:
            continue
        x_lo = <int>xld; x_hi = <int>xhd
        y_lo = <int>yld; y_hi = <int>yhd
        for iy in range(y_lo, y_hi + 1):
            py = iy + 0.5
            for ix in range(x_lo, x_hi + 1):
                px = ix + 0.5
                b0 = ((u1 - px) * (v2 - py) - (v1 - py) * (u2 - px)) * inv_area
                if b0 < 0.0:
                    continue
                b1 = ((px - u0) * (v2 - v0) - (py - v0) * (u2 - u0)) * inv_area
                if b1 < 0.0:
                    continue
                b2 = 1.0 - b0 - b1
                if b2 < 0.0:
                    continue
                wp = b0 * w0 + b1 * w1 + b2 * w2
                if wp > wpix[iy, ix]:
                    wpix[iy, ix] = wp
                    face_id[iy, ix] = <int>f
                    bary[iy, ix, 0] = b0
                    bary[iy, ix, 1] = b1
                    bary[iy, ix, 2] = b2
    return face_id_arr, bary_arr, wpix_arr


DEF FAR_DISTANCE = 1e6


def border_distance_sweep(double[::1] u, double[::1] v, int[:, ::1] edges,
                          int height, int width, double radius):
    dist_arr = np.full((height, width), FAR_DISTANCE, dtype=np.float64)
    argedge_arr = np.full((height, width), -1, dtype=np.int32)
    cdef double[:, ::1] dist = dist_arr
    cdef int[:, ::1] argedge = argedge_arr

    cdef Py_ssize_t e, ia, ib, ix, iy
    cdef int x_lo, x_hi, y_lo, y_hi
    cdef double ax, ay, bx, by, px, py, d
    cdef double xld, xhd, yld, yhd

    for e in range(edges.shape[0]):
        ia = edges[e, 0]
        ib = edges[e, 1]
        ax = u[ia]; ay = v[ia]
        bx = u[ib]; by = v[ib]
        xld = ceil((ax if ax < bx else bx) - 0.5 - radius)
        xhd = floor((ax if ax > bx else bx) - 0.5 + radius)
        yld = ceil((ay if ay < by else by) - 0.5 - radius)
        yhd = floor((ay if ay > by else by) - 0.5 + radius)
        if xld < 0.0:
            xld = 0.0
        if xhd > width - 1.0:
            xhd = width - 1.0
        if yld < 0.0:
            yld = 0.0
        if yhd > height - 1.0:
            yhd = height - 1.0
        if xld > xhd or yld > yhd:
            continue
        x_lo = <int>xld; x_hi = <int>xhd
        y_lo = <int>yld; y_hi = <int>yhd
        for iy in range(y_lo, y_hi + 1):
            py = iy + 0.5
            for ix in range(x_lo, x_hi + 1):
                px = ix + 0.5
                d = sqrt(_seg_dist2(px, py, ax, ay, bx, by))
                if d < dist[iy, ix]:
                    dist[iy, ix] = d
                    argedge[iy, ix] = <int>e
    return dist_arr, argedge_arr
