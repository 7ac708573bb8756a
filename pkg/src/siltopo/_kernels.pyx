# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels.

Every function here has a numpy twin in ``_fallback`` with the same
signature and bit-identical results; ``_backend`` picks one at import.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, floor, ceil

cnp.import_array()

ctypedef cnp.uint8_t u8
ctypedef cnp.int32_t i32

cdef i32 INF = 1 << 29


cdef inline i32 _min(i32 a, i32 b) noexcept nogil:
    return a if a < b else b


cdef void _chessboard(i32[:, ::1] d, int outside_src) noexcept nogil:
    # Two raster passes over the 8-neighbourhood. Pixels holding 0 are
    # sources; out-of-range cells are sources iff outside_src.
    cdef Py_ssize_t h = d.shape[0], w = d.shape[1], x, y
    cdef i32 v, edge = 1 if outside_src else INF
    for y in range(h):
        for x in range(w):
            v = d[y, x]
            if v == 0:
                continue
            if x > 0:
                v = _min(v, d[y, x - 1] + 1)
            else:
                v = _min(v, edge)
            if y > 0:
                v = _min(v, d[y - 1, x] + 1)
                if x > 0:
                    v = _min(v, d[y - 1, x - 1] + 1)
                if x < w - 1:
                    v = _min(v, d[y - 1, x + 1] + 1)
                else:
                    v = _min(v, edge)
            else:
                v = _min(v, edge)
            if x == w - 1 or y == h - 1:
                v = _min(v, edge)
            d[y, x] = v
    for y in range(h - 1, -1, -1):
        for x in range(w - 1, -1, -1):
            v = d[y, x]
            if v == 0:
                continue
            if x < w - 1:
                v = _min(v, d[y, x + 1] + 1)
            if y < h - 1:
                v = _min(v, d[y + 1, x] + 1)
                if x < w - 1:
                    v = _min(v, d[y + 1, x + 1] + 1)
                if x > 0:
                    v = _min(v, d[y + 1, x - 1] + 1)
            d[y, x] = v


def erosion_distance(const u8[:, ::1] mask, int outside_value):
    """Sum of the 3x3 erosion sequence of ``mask``.

    Equal to the L-inf distance from each active pixel to the nearest
    inactive one (cells beyond the border read as ``outside_value``),
    computed in two raster passes instead of one pass per erosion.
    Caller guarantees termination (some 0 pixel when outside_value is 1).
    """
    cdef Py_ssize_t h = mask.shape[0], w = mask.shape[1], x, y
    out = np.empty((h, w), dtype=np.int32)
    cdef i32[:, ::1] d = out
    for y in range(h):
        for x in range(w):
            d[y, x] = INF if mask[y, x] else 0
    with nogil:
        _chessboard(d, outside_value == 0)
    return out


def outward_distance(const u8[:, ::1] mask):
    """L-inf distance to the nearest active pixel; 0 on active pixels."""
    cdef Py_ssize_t h = mask.shape[0], w = mask.shape[1], x, y
    out = np.empty((h, w), dtype=np.int32)
    cdef i32[:, ::1] d = out
    for y in range(h):
        for x in range(w):
            d[y, x] = 0 if mask[y, x] else INF
    with nogil:
        _chessboard(d, 0)
    return out


def ridge(const i32[:, ::1] dist, const u8[:, ::1] mask):
    """Active pixels of ``mask`` whose distance equals the clipped 3x3 max."""
    cdef Py_ssize_t h = dist.shape[0], w = dist.shape[1], x, y, x0, x1, y0, y1, i, j
    cdef i32 v, m
    out = np.zeros((h, w), dtype=np.uint8)
    cdef u8[:, ::1] t = out
    with nogil:
        for y in range(h):
            y0 = y - 1 if y > 0 else 0
            y1 = y + 1 if y < h - 1 else h - 1
            for x in range(w):
                if not mask[y, x]:
                    continue
                x0 = x - 1 if x > 0 else 0
                x1 = x + 1 if x < w - 1 else w - 1
                v = dist[y, x]
                m = v
                for j in range(y0, y1 + 1):
                    for i in range(x0, x1 + 1):
                        if dist[j, i] > m:
                            m = dist[j, i]
                t[y, x] = 1 if v == m else 0
    return out


def masked_sum(const i32[:, ::1] dist, const u8[:, ::1] mask):
    cdef Py_ssize_t h = dist.shape[0], w = dist.shape[1], x, y
    cdef long long s = 0
    with nogil:
        for y in range(h):
            for x in range(w):
                if mask[y, x]:
                    s += dist[y, x]
    return s


cdef inline double _seg_d2(double px, double py, double ax, double ay,
                           double dx, double dy, double l2) noexcept nogil:
    cdef double t = 0.0, qx, qy
    if l2 > 0.0:
        t = ((px - ax) * dx + (py - ay) * dy) / l2
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
    qx = px - (ax + t * dx)
    qy = py - (ay + t * dy)
    return qx * qx + qy * qy


def capsule_mask(const double[:, ::1] segs, int width, int height):
    """Hard coverage of pixel centres by capsules ``(ax, ay, bx, by, r)``.

    Segment coordinates are relative to the canvas centre; pixel (x, y) has
    centre (x + 0.5 - width/2, y + 0.5 - height/2).
    """
    cdef Py_ssize_t n = segs.shape[0], k
    cdef int x, y, xa, xb, ya, yb
    cdef double cx = width * 0.5, cy = height * 0.5
    cdef double ax, ay, dx, dy, r, l2, px, py
    out = np.zeros((height, width), dtype=np.uint8)
    cdef u8[:, ::1] m = out
    with nogil:
        for k in range(n):
            ax = segs[k, 0]
            ay = segs[k, 1]
            dx = segs[k, 2] - ax
            dy = segs[k, 3] - ay
            r = segs[k, 4]
            l2 = dx * dx + dy * dy
            xa = <int>floor((ax if dx > 0 else ax + dx) - r + cx) - 1
            xb = <int>ceil((ax + dx if dx > 0 else ax) + r + cx) + 1
            ya = <int>floor((ay if dy > 0 else ay + dy) - r + cy) - 1
            yb = <int>ceil((ay + dy if dy > 0 else ay) + r + cy) + 1
            if xa < 0:
                xa = 0
            if ya < 0:
                ya = 0
            if xb > width - 1:
                xb = width - 1
            if yb > height - 1:
                yb = height - 1
            for y in range(ya, yb + 1):
                py = y + 0.5 - cy
                for x in range(xa, xb + 1):
                    if m[y, x]:
                        continue
                    px = x + 0.5 - cx
                    if _seg_d2(px, py, ax, ay, dx, dy, l2) <= r * r:
                        m[y, x] = 1
    return out


def capsule_sdf(const double[:, ::1] segs, int width, int height):
    """Signed distance from each pixel centre to the capsule union."""
    cdef Py_ssize_t n = segs.shape[0], k
    cdef int x, y
    cdef double cx = width * 0.5, cy = height * 0.5
    cdef double px, py, best, d, dx, dy
    out = np.empty((height, width), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for y in range(height):
            py = y + 0.5 - cy
            for x in range(width):
                px = x + 0.5 - cx
                best = 1e300
                for k in range(n):
                    dx = segs[k, 2] - segs[k, 0]
                    dy = segs[k, 3] - segs[k, 1]
                    d = sqrt(_seg_d2(px, py, segs[k, 0], segs[k, 1], dx, dy,
                                     dx * dx + dy * dy)) - segs[k, 4]
                    if d < best:
                        best = d
                o[y, x] = best
    return out
