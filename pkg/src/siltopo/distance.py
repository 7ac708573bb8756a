"""Distance fields by recursive 3x3 erosion, plus a brute-force oracle.

``s2d`` accumulates the erosion sequence ``S_0 = S, S_{i+1} = erode(S_i)``
until it empties. With the strict rule (a pixel survives iff its whole
closed 3x3 window is active) the sum is exactly the L-inf (chessboard)
distance from each active pixel to the nearest inactive one, which is
what ``s2d_oracle`` computes directly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .mask import _frozen, as_mask, invert

STRICT = "strict"
PAPER_LITERAL = "paper-literal"
EROSION_RULES = (STRICT, PAPER_LITERAL)


class NonTerminatingError(ValueError):
    """Erosion would never empty the mask (all-ones under outside_value=1)."""


@dataclass(frozen=True)
class BorderPolicy:
    """Value assumed for every pixel beyond the image border."""

    outside_value: int = 0

    def __post_init__(self):
        if self.outside_value not in (0, 1):
            raise ValueError(f"outside_value must be 0 or 1, got {self.outside_value!r}")


INWARDS = BorderPolicy(0)
OUTWARDS = BorderPolicy(1)


def _policy(policy) -> BorderPolicy:
    if isinstance(policy, BorderPolicy):
        return policy
    return BorderPolicy(int(policy))


def _check_rule(rule: str) -> None:
    if rule not in EROSION_RULES:
        raise ValueError(f"unknown erosion rule {rule!r}; expected one of {EROSION_RULES}")


def _window_count(m: np.ndarray, outside_value: int) -> np.ndarray:
    h, w = m.shape
    p = np.pad(m.astype(np.int32), 1, constant_values=outside_value)
    n = np.zeros((h, w), dtype=np.int32)
    for dy in range(3):
        for dx in range(3):
            n += p[dy:dy + h, dx:dx + w]
    return n


def erode_once(mask, policy=INWARDS, rule: str = STRICT) -> np.ndarray:
    """One 3x3 erosion step.

    ``strict``: keep u iff all nine cells of its closed window are 1, i.e.
    ``ReLU(N * S - 8)`` with an all-ones kernel. ``paper-literal``: the
    threshold ``m = n^2 - 2 = 7`` with the output clamped to {0, 1}, which
    can also switch on a 0 pixel whose eight neighbours are all active.
    """
    _check_rule(rule)
    m = as_mask(mask)
    count = _window_count(m, _policy(policy).outside_value)
    thresh = 8 if rule == STRICT else 7
    return _frozen(np.clip(count - thresh, 0, 1).astype(np.uint8))


def _guard(m: np.ndarray, policy: BorderPolicy) -> None:
    if policy.outside_value == 1 and m.all():
        raise NonTerminatingError(
            "all-ones mask with outside_value=1: erosion never reaches zero")


def s2d(mask, policy=INWARDS, rule: str = STRICT) -> np.ndarray:
    """Sum of the erosion sequence of ``mask`` (int32, iterated to the fixpoint)."""
    _check_rule(rule)
    m = as_mask(mask)
    policy = _policy(policy)
    _guard(m, policy)
    if rule == STRICT:
        return _frozen(_backend.kernels.erosion_distance(m, policy.outside_value))
    return _frozen(_s2d_literal(m, policy.outside_value))


def _s2d_literal(m: np.ndarray, outside_value: int) -> np.ndarray:
    h, w = m.shape
    acc = np.zeros((h, w), dtype=np.int32)
    s = m
    for _ in range(h * w + 1):
        if not s.any():
            return acc
        acc += s
        nxt = erode_once(s, BorderPolicy(outside_value), PAPER_LITERAL)
        if np.array_equal(nxt, s):
            raise NonTerminatingError("paper-literal erosion reached a non-empty fixpoint")
        s = nxt
    raise NonTerminatingError("paper-literal erosion did not terminate")


def s2d_oracle(mask, policy=INWARDS) -> np.ndarray:
    """Direct minimisation: L-inf distance from each active pixel to the
    nearest 0 pixel, counting out-of-image cells as ``outside_value``."""
    m = as_mask(mask)
    policy = _policy(policy)
    _guard(m, policy)
    h, w = m.shape
    out = np.zeros((h, w), dtype=np.int32)
    ay, ax = np.nonzero(m)
    if ay.size == 0:
        return _frozen(out)
    zy, zx = np.nonzero(m == 0)
    best = np.full(ay.size, np.iinfo(np.int32).max, dtype=np.int64)
    if policy.outside_value == 0:
        best = np.minimum.reduce([ax + 1, ay + 1, w - ax, h - ay]).astype(np.int64)
    # narrow coordinates keep the pairwise temporaries small
    ct = np.int16 if max(h, w) < 2 ** 15 else np.int64
    ay, ax, zy, zx = (a.astype(ct) for a in (ay, ax, zy, zx))
    chunk = max(1, 1_000_000 // max(zy.size, 1))
    for i in range(0, ay.size, chunk):
        sl = slice(i, i + chunk)
        if zy.size:
            d = np.maximum(np.abs(ay[sl, None] - zy[None, :]),
                           np.abs(ax[sl, None] - zx[None, :]))
            best[sl] = np.minimum(best[sl], d.min(axis=1))
    out[ay.astype(np.intp), ax.astype(np.intp)] = best
    return _frozen(out)


def inwards(mask, rule: str = STRICT) -> np.ndarray:
    return s2d(mask, INWARDS, rule)


def outwards(target, rule: str = STRICT) -> np.ndarray:
    """Distance from every pixel to the nearest active pixel of ``target``."""
    t = as_mask(target)
    if not t.any():
        raise ValueError("outwards distance of an empty target is undefined")
    return s2d(invert(t), OUTWARDS, rule)


def render_distance(dist) -> tuple[np.ndarray, int]:
    """Scale a distance map so its maximum maps to 1.0; returns (gray, raw max)."""
    d = np.asarray(dist)
    top = int(d.max(initial=0))
    if top == 0:
        return _frozen(np.zeros(d.shape)), 0
    return _frozen(d.astype(np.float64) / top), top
