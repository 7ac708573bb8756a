"""Pure numpy twins of the compiled kernels in ``_kernels.pyx``.

These are the reference path: ``erosion_distance`` runs the literal
erode-and-accumulate recursion rather than a raster-scan shortcut.
"""
from __future__ import annotations

import numpy as np


def _erode(s: np.ndarray, outside_value: int) -> np.ndarray:
    h, w = s.shape
    p = np.pad(s, 1, constant_values=outside_value)
    out = s.copy()
    for dy in range(3):
        for dx in range(3):
            out &= p[dy:dy + h, dx:dx + w]
    return out


def erosion_distance(mask: np.ndarray, outside_value: int) -> np.ndarray:
    s = np.ascontiguousarray(mask, dtype=np.uint8)
    acc = np.zeros(s.shape, dtype=np.int32)
    while s.any():
        acc += s
        s = _erode(s, outside_value)
    return acc


def outward_distance(mask: np.ndarray) -> np.ndarray:
    return erosion_distance(1 - np.asarray(mask, dtype=np.uint8), 1)


def ridge(dist: np.ndarray, mask: np.ndarray) -> np.ndarray:
    h, w = dist.shape
    # zero padding cannot raise a max over non-negative values
    p = np.pad(dist, 1, constant_values=0)
    wmax = dist.copy()
    for dy in range(3):
        for dx in range(3):
            np.maximum(wmax, p[dy:dy + h, dx:dx + w], out=wmax)
    return ((dist == wmax) & (mask != 0)).astype(np.uint8)


def masked_sum(dist: np.ndarray, mask: np.ndarray) -> int:
    return int(dist[mask != 0].sum(dtype=np.int64))


def _pixel_grid(width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    px = np.arange(width, dtype=np.float64) + 0.5 - width * 0.5
    py = np.arange(height, dtype=np.float64) + 0.5 - height * 0.5
    return px[None, :], py[:, None]


def _seg_d2(px, py, ax, ay, bx, by):
    dx, dy = bx - ax, by - ay
    l2 = dx * dx + dy * dy
    if l2 > 0.0:
        t = np.clip(((px - ax) * dx + (py - ay) * dy) / l2, 0.0, 1.0)
    else:
        t = 0.0
    qx = px - (ax + t * dx)
    qy = py - (ay + t * dy)
    return qx * qx + qy * qy


def capsule_mask(segs: np.ndarray, width: int, height: int) -> np.ndarray:
    px, py = _pixel_grid(width, height)
    out = np.zeros((height, width), dtype=bool)
    for ax, ay, bx, by, r in np.asarray(segs, dtype=np.float64):
        out |= _seg_d2(px, py, ax, ay, bx, by) <= r * r
    return out.astype(np.uint8)


def capsule_sdf(segs: np.ndarray, width: int, height: int) -> np.ndarray:
    px, py = _pixel_grid(width, height)
    best = np.full((height, width), 1e300)
    for ax, ay, bx, by, r in np.asarray(segs, dtype=np.float64):
        np.minimum(best, np.sqrt(_seg_d2(px, py, ax, ay, bx, by)) - r, out=best)
    return best
