"""Source training and silhouette-only target adaptation of the regressor.

``adapt`` alternates two branches by outer iteration: when
``iter % K != 0`` the regressor is updated directly on the silhouette
losses; otherwise each batch item is fitted starting from the regressor's
prediction and the fitted parameters supervise the regressor.
"""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Callable

import numpy as np

from .bench import TargetItem
from .body import forward_kinematics
from .body_constants import PARAM_DIM
from .fitting import FitConfig, Target, fd_gradient, fit, fit_terms, silhouette_terms, predicted_mask
from .regressor import (RegressorWeights, backward, features_batch, forward, make_optimizer)

log = logging.getLogger(__name__)


@dataclass
class AdaptConfig:
    K: int = 4
    max_iter: int = 200
    max_iter_opt: int = 10
    lr_T: float = 1e-3
    lr_S: float = 1e-3
    lr_theta: float = 1e-3
    optimizer: str = "adam"
    batch_size: int = 16
    seed: int = 0
    w_T: float = 1.0
    w_S: float = 1.0
    w_beta: float = 0.1
    sil_loss: str = "sp"
    topo_loss: str = "sp"
    fd_phi: float = 0.05
    fd_alpha: float = 0.05
    fd_trans: float = 1.0
    fd_scale: float = 0.02
    fd_beta: float = 0.02
    eval_every: int = 0

    def __post_init__(self):
        if self.K < 2:
            raise ValueError("K must be >= 2")
        if min(self.lr_T, self.lr_S, self.lr_theta) < 0:
            raise ValueError("learning rates must be non-negative")
        if self.batch_size < 1 or self.max_iter < 0 or self.max_iter_opt < 1:
            raise ValueError("batch_size, max_iter_opt must be >= 1 and max_iter >= 0")
        self.fit_config()  # validates loss kinds and steps

    def fit_config(self) -> FitConfig:
        return FitConfig(max_iters=self.max_iter_opt, w_T=self.w_T, w_S=self.w_S,
                         w_beta=self.w_beta, fd_phi=self.fd_phi, fd_alpha=self.fd_alpha,
                         fd_trans=self.fd_trans, fd_scale=self.fd_scale, fd_beta=self.fd_beta,
                         sil_loss=self.sil_loss, topo_loss=self.topo_loss)

    @classmethod
    def from_dict(cls, d: dict) -> "AdaptConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown AdaptConfig keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainLog:
    records: list = field(default_factory=list)

    def add(self, **rec) -> None:
        self.records.append(rec)

    def write_csv(self, path) -> None:
        keys = []
        for r in self.records:
            keys += [k for k in r if k not in keys]
        with open(path, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=keys, lineterminator="\n", restval="")
            w.writeheader()
            for r in self.records:
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def supervised_grad(w: RegressorWeights, x: np.ndarray, targets: np.ndarray):
    """Gradient of the batch mean of ``|theta_hat - target|^2`` (17-vector).

    ``x`` are regressor features (n, 1024). Returns (gradient, loss).
    """
    x = np.atleast_2d(x)
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    theta, cache = forward(w, x)
    diff = theta - targets
    n = x.shape[0]
    loss = float((diff ** 2).sum() / n)
    return backward(w, cache, 2.0 * diff / n), loss


def _output_fd(args):
    """Per-item central differences of (w_T L_T, w_S L_S) in output space."""
    theta, target, cfg = args
    h = cfg.steps()

    def terms(v):
        l_t, l_s = silhouette_terms(predicted_mask(v, target.canvas), target, cfg)
        return np.array([cfg.w_T * l_t, cfg.w_S * l_s])

    return fd_gradient(terms, theta, h), terms(theta)


def _fit_item(args):
    theta, target, cfg = args
    return fit(target, theta, cfg).params.to_vector()


def _map(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(a) for a in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def silhouette_grad(w: RegressorWeights, x: np.ndarray, targets: list[Target],
                    cfg: FitConfig | None = None, jobs: int = 1):
    """Weight gradients of the batch-mean ``w_T L_T`` and ``w_S L_S``.

    Per item, d loss / d theta_hat comes from central differences over the
    17 outputs; it is chained through the network's analytic Jacobian.
    Returns ``(grad_T, grad_S, mean_terms)`` with mean (w_T L_T, w_S L_S).
    """
    cfg = cfg or FitConfig()
    x = np.atleast_2d(x)
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    theta, cache = forward(w, x)
    res = _map(_output_fd, [(theta[i], targets[i], cfg) for i in range(len(targets))], jobs)
    n = x.shape[0]
    g = np.stack([r[0] for r in res])          # (n, 17, 2)
    vals = np.stack([r[1] for r in res])       # (n, 2)
    grad_t = backward(w, cache, g[:, :, 0] / n)
    grad_s = backward(w, cache, g[:, :, 1] / n)
    return grad_t, grad_s, vals.mean(axis=0)


@dataclass
class TrainConfig:
    """Settings of :func:`train_source`."""

    epochs: int = 200
    lr: float = 1e-3
    seed: int = 0
    batch_size: int = 16
    w_keypoint: float = 0.0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.lr < 0 or self.w_keypoint < 0:
            raise ValueError("epochs, lr, w_keypoint must be >= 0 and batch_size >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown TrainConfig keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def train_source(samples, epochs: int = 200, lr: float = 1e-3, seed: int = 0,
                 batch_size: int = 16, w_keypoint: float = 0.0, canvas=None,
                 log_every: int = 0):
    """Mini-batch Adam on the supervised parameter loss over labelled samples.

    ``w_keypoint > 0`` adds the joint-position L2 term (its output-space
    gradient by central differences through the kinematics).
    Returns (weights, TrainLog with one record per epoch).
    """
    if not samples:
        raise ValueError("empty dataset")
    rng = np.random.default_rng(seed)
    w = RegressorWeights.init(rng)
    x = features_batch([s.image for s in samples])
    y = np.stack([s.gt_params.to_vector() for s in samples])
    joints = np.stack([s.gt_joints for s in samples]) if w_keypoint else None
    if canvas is None:
        h, wd = samples[0].silhouette.shape
        canvas = (wd, h)
    opt = make_optimizer("adam", lr)
    tlog = TrainLog()
    n = len(samples)
    for epoch in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            g, loss = supervised_grad(w, x[idx], y[idx])
            if w_keypoint:
                gk = _keypoint_grad(w, x[idx], joints[idx], canvas)
                for k in g.arrays():
                    getattr(g, k)[...] += w_keypoint * getattr(gk, k)
            opt.step(w, g)
            total += loss * len(idx)
        tlog.add(epoch=epoch, loss_theta=total / n)
        if log_every and epoch % log_every == 0:
            log.info("epoch %d loss %.5f", epoch, total / n)
    return w, tlog


def _keypoint_grad(w, x, joints, canvas, step: float = 1e-4):
    theta, cache = forward(w, x)
    n = x.shape[0]
    d = np.zeros_like(theta)
    for i in range(n):
        def kp(v, i=i):
            return float(((forward_kinematics(v, canvas) - joints[i]) ** 2).sum())
        d[i] = fd_gradient(kp, theta[i], np.full(PARAM_DIM, step))
    return backward(w, cache, d / n)


def schedule(max_iter: int, K: int) -> list[str]:
    """Branch per outer iteration: ``fit`` when ``iter % K == 0`` else ``direct``."""
    return ["fit" if it % K == 0 else "direct" for it in range(max_iter)]


def adapt(w: RegressorWeights, items, cfg: AdaptConfig, jobs: int = 1,
          evaluate: Callable[[RegressorWeights], dict] | None = None):
    """Silhouette-only adaptation of ``w`` on target ``items``.

    ``items`` need only ``image`` and ``silhouette``; they are copied into
    label-free :class:`TargetItem` views before use. Returns the adapted
    weights (a new object) and a :class:`TrainLog`.
    """
    items = [TargetItem(it.image, it.silhouette) for it in items]
    if not items:
        raise ValueError("empty target dataset")
    for i, it in enumerate(items):
        if not np.any(it.silhouette):
            raise ValueError(f"target item {i} has an empty silhouette")
    w = w.copy()
    fcfg = cfg.fit_config()
    rng = np.random.default_rng(cfg.seed)
    x_all = features_batch([it.image for it in items])
    targets = [Target(it.silhouette) for it in items]
    opt_t = make_optimizer(cfg.optimizer, cfg.lr_T)
    opt_s = make_optimizer(cfg.optimizer, cfg.lr_S)
    opt_theta = make_optimizer(cfg.optimizer, cfg.lr_theta)
    tlog = TrainLog()
    order, pos = rng.permutation(len(items)), 0

    for it, branch in enumerate(schedule(cfg.max_iter, cfg.K)):
        if pos + cfg.batch_size > len(items):
            order, pos = rng.permutation(len(items)), 0
        idx = order[pos:pos + cfg.batch_size]
        pos += cfg.batch_size
        xb = x_all[idx]
        tb = [targets[i] for i in idx]
        rec = {"iter": it, "branch": branch}
        if branch == "direct":
            gt, gs, (lt, ls) = silhouette_grad(w, xb, tb, fcfg, jobs)
            opt_t.step(w, gt)
            opt_s.step(w, gs)
            rec.update(l_t=float(lt), l_s=float(ls))
        else:
            theta, _ = forward(w, xb)
            fitted = np.stack(_map(_fit_item, [(theta[j], tb[j], fcfg) for j in range(len(idx))],
                                   jobs))
            g, l_theta = supervised_grad(w, xb, fitted)
            opt_theta.step(w, g)
            fl = [fit_terms(fitted[j], tb[j], fcfg) for j in range(len(idx))]
            rec.update(l_t=float(np.mean([f.l_t for f in fl])),
                       l_s=float(np.mean([f.l_s for f in fl])), l_theta=l_theta)
        if evaluate is not None and cfg.eval_every and (it + 1) % cfg.eval_every == 0:
            rec.update(evaluate(w))
        tlog.add(**rec)
    return w, tlog
