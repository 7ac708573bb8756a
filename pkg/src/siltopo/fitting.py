"""Iterative fitting of body parameters to a target silhouette.

Gradients come from central finite differences in the 17-dimensional
parameter space; steps are accepted only when they strictly lower the
total loss, so loss traces never increase.
"""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, NamedTuple

import numpy as np

from . import _backend
from .body import (ALPHA, BETA, PHI, SCALE, TRANS, BodyParams, capsules, clamp_vector)
from .body_constants import BETA_BOX, PARAM_DIM, SCALE_BOX
from .mask import as_mask

SIL_LOSSES = ("sp", "l2")
TOPO_LOSSES = ("sp", "l2", "none")

LOWER = np.full(PARAM_DIM, -np.inf)
UPPER = np.full(PARAM_DIM, np.inf)
LOWER[PHI], UPPER[PHI] = -1.0, 1.0
LOWER[BETA], UPPER[BETA] = BETA_BOX
LOWER[SCALE], UPPER[SCALE] = SCALE_BOX


@dataclass
class FitConfig:
    max_iters: int = 10
    w_T: float = 1.0
    w_S: float = 1.0
    w_beta: float = 0.1
    fd_phi: float = 0.05
    fd_alpha: float = 0.05
    fd_trans: float = 1.0
    fd_scale: float = 0.02
    fd_beta: float = 0.02
    initial_rate: float = 1.0
    max_halvings: int = 8
    use_normalized_losses: bool = True
    sil_loss: str = "sp"
    topo_loss: str = "sp"

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if min(self.fd_phi, self.fd_alpha, self.fd_trans, self.fd_scale, self.fd_beta) <= 0:
            raise ValueError("finite-difference steps must be positive")
        if self.sil_loss not in SIL_LOSSES:
            raise ValueError(f"sil_loss must be one of {SIL_LOSSES}")
        if self.topo_loss not in TOPO_LOSSES:
            raise ValueError(f"topo_loss must be one of {TOPO_LOSSES}")

    def steps(self) -> np.ndarray:
        h = np.empty(PARAM_DIM)
        h[PHI] = self.fd_phi
        h[BETA] = self.fd_beta
        h[ALPHA] = self.fd_alpha
        h[SCALE] = self.fd_scale
        h[TRANS] = self.fd_trans
        return h

    @classmethod
    def from_dict(cls, d: dict) -> "FitConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown FitConfig keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


class FitTerms(NamedTuple):
    total: float
    l_t: float
    l_s: float
    reg: float


@dataclass
class FitResult:
    params: BodyParams
    trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False

    def write_trace(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["iter", "total", "l_t", "l_s", "reg"])
            for i, t in enumerate(self.trace):
                w.writerow([i, repr(t.total), repr(t.l_t), repr(t.l_s), repr(t.reg)])


def penalty_empty(canvas) -> int:
    w, h = canvas
    return w * h * max(w, h)


def _skeleton(m: np.ndarray) -> np.ndarray:
    k = _backend.kernels
    return k.ridge(k.erosion_distance(m, 0), m)


class Target:
    """A target silhouette with its skeleton and outwards maps cached."""

    def __init__(self, silhouette):
        s = as_mask(silhouette)
        if not s.any():
            raise ValueError("target silhouette is empty")
        k = _backend.kernels
        self.S = s
        self.T = _skeleton(s)
        self.out_S = k.outward_distance(s)
        self.out_T = k.outward_distance(self.T)
        self.n_S = int(s.sum(dtype=np.int64))
        self.n_T = int(self.T.sum(dtype=np.int64))

    @property
    def canvas(self) -> tuple[int, int]:
        return self.S.shape[1], self.S.shape[0]


def _term(kind: str, pred: np.ndarray, ref: np.ndarray, out_ref: np.ndarray,
          n_ref: int, normalized: bool) -> float:
    k = _backend.kernels
    n_pred = int(pred.sum(dtype=np.int64))
    if kind == "sp":
        raw = int(k.masked_sum(out_ref, pred)) + int(k.masked_sum(k.outward_distance(pred), ref))
    else:
        raw = int(np.count_nonzero(pred != ref))
    return raw / (n_ref + n_pred) if normalized else float(raw)


def silhouette_terms(pred: np.ndarray, target: Target, cfg: FitConfig) -> tuple[float, float]:
    """``(L_T, L_S)`` between a predicted mask and a cached target.

    An empty prediction scores ``penalty_empty`` on both terms.
    """
    if not pred.any():
        p = float(penalty_empty(target.canvas))
        return p, p
    norm = cfg.use_normalized_losses
    l_s = _term(cfg.sil_loss, pred, target.S, target.out_S, target.n_S, norm)
    if cfg.topo_loss == "none":
        return 0.0, l_s
    t_hat = _skeleton(pred)
    l_t = _term(cfg.topo_loss, t_hat, target.T, target.out_T, target.n_T, norm)
    return l_t, l_s


def predicted_mask(v: np.ndarray, canvas) -> np.ndarray:
    w, h = canvas
    return _backend.kernels.capsule_mask(capsules(v, canvas), int(w), int(h))


def fit_terms(v: np.ndarray, target: Target, cfg: FitConfig) -> FitTerms:
    l_t, l_s = silhouette_terms(predicted_mask(v, target.canvas), target, cfg)
    reg = float(((v[BETA] - 1.0) ** 2).sum())
    return FitTerms(cfg.w_T * l_t + cfg.w_S * l_s + cfg.w_beta * reg, l_t, l_s, reg)


def total_fit_loss(params, target_S, weights=None, cfg: FitConfig | None = None) -> FitTerms:
    """Weighted ``w_T L_T + w_S L_S + w_beta |beta - 1|^2`` with each term.

    ``target_S`` may be a mask or a prepared :class:`Target`; ``weights``
    overrides ``(w_T, w_S, w_beta)`` of ``cfg``.
    """
    cfg = cfg or FitConfig()
    if weights is not None:
        cfg = FitConfig(**{**cfg.to_dict(), "w_T": weights[0], "w_S": weights[1],
                           "w_beta": weights[2]})
    target = target_S if isinstance(target_S, Target) else Target(target_S)
    v = params.to_vector() if isinstance(params, BodyParams) else np.asarray(params, float)
    return fit_terms(v, target, cfg)


def fd_gradient(loss_at: Callable, params, steps) -> np.ndarray:
    """Central differences ``(f(v + h e_i) - f(v - h e_i)) / (2h)``.

    Probes are clamped into the parameter box and the divisor is the
    displacement actually taken. ``loss_at`` may return a scalar or a
    vector of terms; the result then has a trailing axis per term.
    """
    v = params.to_vector() if isinstance(params, BodyParams) else np.asarray(params, float)
    h = np.broadcast_to(np.asarray(steps, dtype=np.float64), v.shape)
    if np.any(h <= 0):
        raise ValueError("finite-difference steps must be positive")
    grads = []
    for i in range(v.size):
        hi = min(v[i] + h[i], UPPER[i])
        lo = max(v[i] - h[i], LOWER[i])
        plus, minus = v.copy(), v.copy()
        plus[i], minus[i] = hi, lo
        span = hi - lo
        fp = np.asarray(loss_at(plus), dtype=np.float64)
        fm = np.asarray(loss_at(minus), dtype=np.float64)
        grads.append((fp - fm) / span if span > 0 else np.zeros_like(fp))
    return np.array(grads)


def fit(target_S, init, cfg: FitConfig | None = None) -> FitResult:
    """Backtracking descent on the fitting loss from ``init``.

    Each iteration moves along the finite-difference gradient rescaled so
    its largest coordinate equals ``initial_rate`` FD steps, halving the
    rate up to ``max_halvings`` times until the total strictly decreases.
    """
    cfg = cfg or FitConfig()
    target = target_S if isinstance(target_S, Target) else Target(target_S)
    v = clamp_vector(init.to_vector() if isinstance(init, BodyParams)
                     else np.array(init, dtype=np.float64))
    h = cfg.steps()
    cur = fit_terms(v, target, cfg)
    trace = [cur]
    converged = False
    iters = 0

    def total_at(x):
        return fit_terms(x, target, cfg).total

    for _ in range(cfg.max_iters):
        iters += 1
        g = fd_gradient(total_at, v, h)
        z = g * h
        zmax = float(np.abs(z).max())
        if zmax == 0.0:
            converged = True
            break
        direction = -(z / zmax) * h
        rate = cfg.initial_rate
        accepted = None
        for _ in range(cfg.max_halvings + 1):
            cand = clamp_vector(v + rate * direction)
            terms = fit_terms(cand, target, cfg)
            if terms.total < cur.total:
                accepted = (cand, terms)
                break
            rate *= 0.5
        if accepted is None:
            converged = True
            break
        v, cur = accepted
        trace.append(cur)
        if len(trace) >= 4:
            ref = trace[-4].total
            if ref - cur.total < 1e-4 * ref:
                converged = True
                break
    return FitResult(BodyParams.from_vector(v), trace, iters, converged)
