"""Alignment losses between masks, skeletons and point sets.

``spatial_chamfer`` is the map-only form: each mask's active pixels read
off the other mask's outwards distance map. Because the distance maps are
L-inf, it equals ``chamfer_pointset_linf`` on the two point sets exactly.
``chamfer_pointset`` keeps the squared-Euclidean point-set form.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .mask import as_mask


@dataclass(frozen=True)
class LossValue:
    raw: float
    normalized: float

    @classmethod
    def of(cls, raw, size: int) -> "LossValue":
        return cls(raw, raw / size if size else 0.0)

    def as_dict(self) -> dict:
        return {"raw": self.raw, "normalized": self.normalized}


def _points(p) -> np.ndarray:
    a = np.asarray(p, dtype=np.int64).reshape(-1, 2)
    if a.shape[0] == 0:
        raise ValueError("point set is empty")
    return a


def _one_way(a: np.ndarray, b: np.ndarray, metric: str) -> int:
    total = 0
    chunk = max(1, 2_000_000 // b.shape[0])
    for i in range(0, a.shape[0], chunk):
        d = a[i:i + chunk, None, :] - b[None, :, :]
        if metric == "sq":
            total += int((d * d).sum(axis=2).min(axis=1).sum())
        else:
            total += int(np.abs(d).max(axis=2).min(axis=1).sum())
    return total


def chamfer_pointset(a, b) -> LossValue:
    """Two-way Chamfer with squared Euclidean distances."""
    a, b = _points(a), _points(b)
    raw = _one_way(a, b, "sq") + _one_way(b, a, "sq")
    return LossValue.of(raw, len(a) + len(b))


def chamfer_pointset_linf(a, b) -> LossValue:
    """Two-way Chamfer with unsquared L-inf distances."""
    a, b = _points(a), _points(b)
    raw = _one_way(a, b, "linf") + _one_way(b, a, "linf")
    return LossValue.of(raw, len(a) + len(b))


def _check_pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x, y = as_mask(x), as_mask(y)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    if not x.any() or not y.any():
        raise ValueError("spatial Chamfer of an empty mask is undefined")
    return x, y


def spatial_chamfer_raw(x: np.ndarray, y: np.ndarray,
                        out_x: np.ndarray | None = None,
                        out_y: np.ndarray | None = None) -> int:
    """Unchecked core of :func:`spatial_chamfer`; optional precomputed
    outwards maps skip the distance transform for that side."""
    k = _backend.kernels
    if out_y is None:
        out_y = k.outward_distance(y)
    if out_x is None:
        out_x = k.outward_distance(x)
    return int(k.masked_sum(out_y, x)) + int(k.masked_sum(out_x, y))


def spatial_chamfer(x, y) -> LossValue:
    x, y = _check_pair(x, y)
    raw = spatial_chamfer_raw(x, y)
    return LossValue.of(raw, int(x.sum(dtype=np.int64) + y.sum(dtype=np.int64)))


def pixel_l2(x, y) -> LossValue:
    """Sum of squared per-pixel differences (symmetric difference on masks)."""
    a, b = np.asarray(x), np.asarray(y)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if np.issubdtype(a.dtype, np.floating) or np.issubdtype(b.dtype, np.floating):
        raw = float(((a.astype(np.float64) - b.astype(np.float64)) ** 2).sum())
    else:
        raw = int(((a.astype(np.int64) - b.astype(np.int64)) ** 2).sum())
    return LossValue.of(raw, int(np.count_nonzero(a) + np.count_nonzero(b)))


def keypoint_l2(z, z_hat) -> LossValue:
    """Sum over joints of squared Euclidean offsets (ordered correspondence)."""
    a = np.asarray(z, dtype=np.float64).reshape(-1, 2)
    b = np.asarray(z_hat, dtype=np.float64).reshape(-1, 2)
    if a.shape != b.shape:
        raise ValueError(f"joint count mismatch {len(a)} vs {len(b)}")
    return LossValue.of(float(((a - b) ** 2).sum()), 2 * len(a))
