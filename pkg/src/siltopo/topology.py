"""Topological skeleton as the ridge line of the inwards distance map."""
from __future__ import annotations

import numpy as np

from . import _backend
from .distance import INWARDS, STRICT, s2d
from .mask import _frozen, as_mask


def d2t(dist, mask) -> np.ndarray:
    """Ridge pixels: active in ``mask`` and equal to the 3x3 window max of ``dist``.

    The window is clipped at the image border. Because distances are
    integers, ``dist == windowmax`` is the same test as
    ``ReLU(dist - maxpool(dist) + 1) > 0``; masking by ``mask`` prunes the
    background, where both sides are 0.
    """
    m = as_mask(mask)
    d = np.ascontiguousarray(dist, dtype=np.int32)
    if d.shape != m.shape:
        raise ValueError(f"distance map shape {d.shape} != mask shape {m.shape}")
    return _frozen(_backend.kernels.ridge(d, m))


def skeletonize(mask, rule: str = STRICT) -> np.ndarray:
    m = as_mask(mask)
    return d2t(s2d(m, INWARDS, rule), m)


def window_max_naive(dist) -> np.ndarray:
    """Per-pixel clipped 3x3 maximum by explicit scan (test reference)."""
    d = np.asarray(dist)
    h, w = d.shape
    out = np.empty_like(d)
    for y in range(h):
        for x in range(w):
            out[y, x] = d[max(0, y - 1):y + 2, max(0, x - 1):x + 2].max()
    return out


def overlay(mask, skeleton) -> np.ndarray:
    """Gray map: source mask at 96/255, skeleton at 1.0, background 0."""
    g = np.where(as_mask(mask) != 0, 96 / 255, 0.0)
    g = np.where(as_mask(skeleton) != 0, 1.0, g)
    return _frozen(g)
