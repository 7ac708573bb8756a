"""2-D articulated capsule figure: parameters, kinematics and rendering.

Parameters flatten to a 17-vector ``[phi(10), beta(3), alpha, s, tx, ty]``.
``phi`` is a latent pose in [-1, 1]^10 decoded affinely to joint angles;
``beta`` = (length scale, torso width scale, limb width scale); the camera
rotates by ``alpha``, scales by ``s`` and translates by ``t`` plus the
canvas centre.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .body_constants import (BASE_RADIUS, BETA_BOX, BETA_DIM, JOINTS, MIRROR_SEGMENTS,
                             PARAM_DIM, PHI_DIM, SCALE_BOX, SEGMENTS)
from .mask import _frozen

_JIDX = {name: i for i, name in enumerate(JOINTS)}
_SIDX = {seg[0]: i for i, seg in enumerate(SEGMENTS)}
_PARENT_J = np.array([_JIDX[s[1]] for s in SEGMENTS])
_CHILD_J = np.array([_JIDX[s[2]] for s in SEGMENTS])
_PARENT_S = [(_SIDX[s[3]] if s[3] else -1) for s in SEGMENTS]
_REST_DIR = np.array([s[4] for s in SEGMENTS], dtype=np.float64)
_REST_LEN = np.array([s[5] for s in SEGMENTS], dtype=np.float64)
_RADIUS_CLASS = [s[6] for s in SEGMENTS]
_LO = np.array([s[7][0] for s in SEGMENTS], dtype=np.float64)
_HI = np.array([s[7][1] for s in SEGMENTS], dtype=np.float64)
_MID = (_LO + _HI) / 2
_HALF = (_HI - _LO) / 2

PHI = slice(0, PHI_DIM)
BETA = slice(PHI_DIM, PHI_DIM + BETA_DIM)
ALPHA = PHI_DIM + BETA_DIM
SCALE = ALPHA + 1
TRANS = slice(SCALE + 1, SCALE + 3)

DEFAULT_STYLE = (0.6, 0.4, 0.7)  # fg level, bg level, softness (px)


@dataclass(frozen=True)
class BodyParams:
    """Latent pose, shape and camera of one figure.

    ``phi`` and ``beta`` are clamped into their boxes on construction.
    """

    phi: tuple = (0.0,) * PHI_DIM
    beta: tuple = (1.0, 1.0, 1.0)
    alpha: float = 0.0
    s: float = 1.0
    t: tuple = field(default=(0.0, 0.0))

    def __post_init__(self):
        phi = np.clip(np.asarray(self.phi, dtype=np.float64).reshape(-1), -1.0, 1.0)
        beta = np.clip(np.asarray(self.beta, dtype=np.float64).reshape(-1), *BETA_BOX)
        t = np.asarray(self.t, dtype=np.float64).reshape(-1)
        if phi.size != PHI_DIM or beta.size != BETA_DIM or t.size != 2:
            raise ValueError("BodyParams expects phi[10], beta[3], t[2]")
        s, alpha = float(self.s), float(self.alpha)
        if not (math.isfinite(s) and s > 0):
            raise ValueError(f"camera scale must be positive, got {s}")
        vals = np.concatenate([phi, beta, t, [alpha]])
        if not np.all(np.isfinite(vals)):
            raise ValueError("BodyParams values must be finite")
        object.__setattr__(self, "phi", tuple(phi.tolist()))
        object.__setattr__(self, "beta", tuple(beta.tolist()))
        object.__setattr__(self, "t", tuple(t.tolist()))
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "s", s)

    def to_vector(self) -> np.ndarray:
        return np.array([*self.phi, *self.beta, self.alpha, self.s, *self.t])

    @classmethod
    def from_vector(cls, v) -> "BodyParams":
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (PARAM_DIM,):
            raise ValueError(f"expected a {PARAM_DIM}-vector, got shape {v.shape}")
        return cls(v[PHI], v[BETA], v[ALPHA], v[SCALE], v[TRANS])

    def to_json(self) -> dict:
        return {"phi": list(self.phi), "beta": list(self.beta),
                "camera": {"alpha": self.alpha, "s": self.s, "t": list(self.t)}}

    @classmethod
    def from_json(cls, d: dict) -> "BodyParams":
        extra = set(d) - {"phi", "beta", "camera"}
        if extra:
            raise ValueError(f"unknown BodyParams keys: {sorted(extra)}")
        cam = d.get("camera", {})
        return cls(d.get("phi", (0.0,) * PHI_DIM), d.get("beta", (1.0,) * 3),
                   cam.get("alpha", 0.0), cam.get("s", 1.0), cam.get("t", (0.0, 0.0)))

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def clamp_vector(v: np.ndarray) -> np.ndarray:
    """Project a parameter vector into the feasible box (in place, returned)."""
    np.clip(v[PHI], -1.0, 1.0, out=v[PHI])
    np.clip(v[BETA], *BETA_BOX, out=v[BETA])
    v[SCALE] = min(max(v[SCALE], SCALE_BOX[0]), SCALE_BOX[1])
    return v


def decode_pose(phi) -> np.ndarray:
    """Joint angles from the latent pose: ``lo + (phi+1)/2 (hi-lo)``, phi clamped."""
    p = np.clip(np.asarray(phi, dtype=np.float64), -1.0, 1.0)
    return _MID + p * _HALF


def _as_vector(params) -> np.ndarray:
    if isinstance(params, BodyParams):
        return params.to_vector()
    return np.asarray(params, dtype=np.float64)


def _rot(x: np.ndarray, y: np.ndarray, c: float, s: float):
    return x * c - y * s, x * s + y * c


def posed_offsets(params, canvas) -> np.ndarray:
    """Joint positions relative to the canvas centre, shape (11, 2)."""
    v = _as_vector(params)
    _, h = canvas
    angles = decode_pose(v[PHI])
    lengths = _REST_LEN * (h * v[PHI_DIM])
    joints = np.zeros((len(JOINTS), 2))
    cum = np.zeros(len(SEGMENTS))
    for j in range(len(SEGMENTS)):
        parent = _PARENT_S[j]
        cum[j] = angles[j] if parent < 0 else cum[parent] + angles[j]
        dx, dy = _rot(_REST_DIR[j, 0], _REST_DIR[j, 1], math.cos(cum[j]), math.sin(cum[j]))
        joints[_CHILD_J[j]] = joints[_PARENT_J[j]] + lengths[j] * np.array([dx, dy])
    ca, sa = math.cos(v[ALPHA]), math.sin(v[ALPHA])
    x, y = _rot(joints[:, 0], joints[:, 1], ca, sa)
    return np.stack([v[SCALE] * x + v[TRANS][0], v[SCALE] * y + v[TRANS][1]], axis=1)


def forward_kinematics(params, canvas) -> np.ndarray:
    """Pose2D: the 11 joints (order ``JOINTS``) in pixel coordinates (x, y)."""
    w, h = canvas
    return posed_offsets(params, canvas) + np.array([w / 2, h / 2])


def capsules(params, canvas) -> np.ndarray:
    """Rows ``(ax, ay, bx, by, radius)`` relative to the canvas centre."""
    v = _as_vector(params)
    _, h = canvas
    j = posed_offsets(v, canvas)
    width = {"torso": v[PHI_DIM + 1], "limb": v[PHI_DIM + 2]}
    radii = np.array([BASE_RADIUS[c] * h * v[SCALE] * width[c] for c in _RADIUS_CLASS])
    return np.ascontiguousarray(
        np.column_stack([j[_PARENT_J], j[_CHILD_J], radii]), dtype=np.float64)


def rasterize(params, canvas) -> np.ndarray:
    """Binary silhouette: pixel centres within any capsule."""
    w, h = canvas
    return _frozen(_backend.kernels.capsule_mask(capsules(params, canvas), int(w), int(h)))


def signed_distance(params, canvas) -> np.ndarray:
    w, h = canvas
    return _backend.kernels.capsule_sdf(capsules(params, canvas), int(w), int(h))


def render_image(params, canvas, style=DEFAULT_STYLE) -> np.ndarray:
    """Soft grayscale rendering ``bg + (fg - bg) * sigmoid(-d / tau)``."""
    fg, bg, tau = style
    if not (0 <= fg <= 1 and 0 <= bg <= 1 and tau > 0):
        raise ValueError(f"invalid style {style!r}")
    d = signed_distance(params, canvas)
    sig = 0.5 * (1.0 + np.tanh(-d / (2.0 * tau)))
    return _frozen(np.clip(bg + (fg - bg) * sig, 0.0, 1.0))


def mirror(params) -> BodyParams:
    """Left/right mirror about the vertical line through the canvas centre."""
    v = _as_vector(params).copy()
    phi = v[PHI].copy()
    for a, b in MIRROR_SEGMENTS:
        phi[a], phi[b] = phi[b], phi[a]
    v[PHI] = -phi
    v[ALPHA] = -v[ALPHA]
    v[TRANS.start] = -v[TRANS.start]
    return BodyParams.from_vector(v)


def _chain_reach() -> tuple[np.ndarray, float]:
    """Per segment: longest rest-length path from its root joint through
    its descendants; plus the longest path from the pelvis."""
    children = {j: [k for k in range(len(SEGMENTS)) if _PARENT_S[k] == j]
                for j in range(len(SEGMENTS))}

    def reach(j):
        return _REST_LEN[j] + max((reach(k) for k in children[j]), default=0.0)

    per_seg = np.array([reach(j) for j in range(len(SEGMENTS))])
    roots = [j for j in range(len(SEGMENTS)) if _PARENT_S[j] < 0]
    return per_seg, max(per_seg[r] for r in roots)


def joint_lipschitz(params, canvas) -> np.ndarray:
    """Bounds L_i with ``max_joint |dJ| <= L_i |d theta_i|`` for a change in
    parameter i alone (others fixed at ``params``).

    phi_j: rotation by ``half_j * dphi`` about the segment's root joint moves
    descendants by at most radius * angle; alpha likewise about the pelvis;
    s and beta_0 scale offsets linearly; widths move no joint; t moves all
    joints one-for-one.
    """
    v = _as_vector(params)
    _, h = canvas
    reach, full = _chain_reach()
    s, ls = v[SCALE], v[PHI_DIM]
    out = np.zeros(PARAM_DIM)
    out[PHI] = s * ls * h * reach * _HALF
    out[PHI_DIM] = s * h * full
    out[ALPHA] = s * ls * h * full
    out[SCALE] = ls * h * full
    out[TRANS] = 1.0
    return out
