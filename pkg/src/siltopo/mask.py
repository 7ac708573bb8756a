"""Binary masks, grayscale maps and PGM file I/O.

A mask is a 2-D ``uint8`` array holding only 0 and 1; a gray map is a 2-D
``float64`` array with intensities in [0, 1]. Both are indexed ``[y, x]``
(row-major, y outer) and returned read-only.
"""
from __future__ import annotations

import os
import re
from typing import NamedTuple

import numpy as np


class MaskError(ValueError):
    pass


class PGMError(ValueError):
    """Malformed or unsupported PGM data; ``offset`` is the byte position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class PixelPoint(NamedTuple):
    x: int
    y: int


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def as_mask(values) -> np.ndarray:
    """Validate ``values`` as a binary mask and return a read-only uint8 copy."""
    a = np.asarray(values)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise MaskError(f"mask must be a non-empty 2-D grid, got shape {a.shape}")
    if a.dtype != np.bool_:
        if not np.all((a == 0) | (a == 1)):
            raise MaskError("mask values must be exactly 0 or 1")
    return _frozen(np.ascontiguousarray(a, dtype=np.uint8).copy())


def as_gray(values) -> np.ndarray:
    a = np.asarray(values, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise MaskError(f"gray map must be a non-empty 2-D grid, got shape {a.shape}")
    if not np.all(np.isfinite(a)) or a.min() < 0.0 or a.max() > 1.0:
        raise MaskError("gray intensities must lie in [0, 1]")
    return _frozen(np.ascontiguousarray(a).copy())


def binarize(gray, threshold: float = 0.5) -> np.ndarray:
    """1 where ``gray >= threshold`` (ties go to foreground)."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    g = np.asarray(gray, dtype=np.float64)
    return _frozen((g >= threshold).astype(np.uint8))


def invert(mask) -> np.ndarray:
    return _frozen((1 - as_mask(mask)).astype(np.uint8))


def active_points(mask) -> np.ndarray:
    """Active pixels as an ``(n, 2)`` int array of ``(x, y)`` rows, row-major order."""
    ys, xs = np.nonzero(as_mask(mask))
    return _frozen(np.stack([xs, ys], axis=1).astype(np.int64))


# --- PGM -------------------------------------------------------------------

_WS = b" \t\n\r\v\f"


def _header_tokens(data: bytes, count: int) -> tuple[list[tuple[int, int]], int]:
    """Read ``count`` whitespace-separated header tokens after the magic.

    Returns ``[(value, offset), ...]`` and the offset just past the last token.
    """
    pos = 2
    tokens = []
    n = len(data)
    while len(tokens) < count:
        while pos < n and (data[pos] in _WS or data[pos] == ord("#")):
            if data[pos] == ord("#"):
                while pos < n and data[pos] not in b"\r\n":
                    pos += 1
            else:
                pos += 1
        if pos >= n:
            raise PGMError("truncated header", pos)
        start = pos
        while pos < n and data[pos] not in _WS and data[pos] != ord("#"):
            pos += 1
        tok = data[start:pos]
        if not tok.isdigit():
            raise PGMError(f"malformed header token {tok!r}", start)
        tokens.append((int(tok), start))
    return tokens, pos


def parse_pgm(data: bytes) -> np.ndarray:
    if len(data) < 2:
        raise PGMError("truncated magic number", len(data))
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise PGMError(f"unsupported magic number {magic!r}", 0)
    tokens, pos = _header_tokens(data, 3)
    (w, w_off), (h, h_off), (maxval, m_off) = tokens
    if w < 1:
        raise PGMError("width must be >= 1", w_off)
    if h < 1:
        raise PGMError("height must be >= 1", h_off)
    if not 1 <= maxval <= 65535:
        raise PGMError(f"maxval {maxval} outside 1..65535", m_off)

    if magic == b"P5":
        if pos >= len(data) or data[pos] not in _WS:
            raise PGMError("expected single whitespace after maxval", pos)
        pos += 1
        itemsize = 1 if maxval < 256 else 2
        need = w * h * itemsize
        if len(data) - pos < need:
            raise PGMError(f"truncated payload: need {need} bytes, have {len(data) - pos}",
                           len(data))
        dtype = np.uint8 if itemsize == 1 else np.dtype(">u2")
        raw = np.frombuffer(data, dtype=dtype, count=w * h, offset=pos).astype(np.int64)
        if raw.max(initial=0) > maxval:
            bad = int(np.argmax(raw > maxval))
            raise PGMError("sample exceeds maxval", pos + bad * itemsize)
    else:
        vals = []
        for m in re.finditer(rb"\S+", data[pos:]):
            if len(vals) == w * h:
                break
            tok = m.group()
            if not tok.isdigit():
                raise PGMError(f"malformed sample {tok!r}", pos + m.start())
            v = int(tok)
            if v > maxval:
                raise PGMError("sample exceeds maxval", pos + m.start())
            vals.append(v)
        if len(vals) < w * h:
            raise PGMError(f"truncated payload: need {w * h} samples, have {len(vals)}",
                           len(data))
        raw = np.asarray(vals, dtype=np.int64)
    return _frozen(raw.reshape(h, w).astype(np.float64) / maxval)


def load_pgm(path) -> np.ndarray:
    """Read a P2/P5 file as a gray map scaled to [0, 1] by ``maxval``."""
    with open(path, "rb") as f:
        return parse_pgm(f.read())


def load_mask(path, threshold: float = 0.5) -> np.ndarray:
    return binarize(load_pgm(path), threshold)


def encode_pgm(image) -> bytes:
    a = np.asarray(image)
    if a.ndim != 2:
        raise MaskError(f"expected a 2-D map, got shape {a.shape}")
    if a.dtype == np.bool_ or np.issubdtype(a.dtype, np.integer):
        px = as_mask(a) * np.uint8(255)
    else:
        px = np.round(np.clip(a, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = px.shape
    return b"P5\n%d %d\n255\n" % (w, h) + px.tobytes()


def save_pgm(image, path) -> None:
    """Write a mask ({0,1} -> {0,255}) or gray map as 8-bit P5."""
    data = encode_pgm(image)
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)
