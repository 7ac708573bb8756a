"""Synthetic datasets, domain shifts and pose metrics.

A dataset directory holds ``{i:05}.img.pgm``, ``{i:05}.sil.pgm`` and
``{i:05}.params.json`` per sample plus ``manifest.json``.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .body import DEFAULT_STYLE, BodyParams, forward_kinematics, rasterize, render_image
from .mask import _frozen, as_mask, load_mask, load_pgm, save_pgm

UAP_BLOCK = 16
LOWRES_FACTORS = (2, 4, 8)
UAP_EPSILONS = (4, 8, 16)  # in units of 1/255


@dataclass(frozen=True)
class DomainShift:
    """``clean``, ``lowres`` (box-down by ``factor``, nearest-up) or ``uap``
    (one bounded noise pattern, seeded by ``noise_seed``, for the domain)."""

    kind: str = "clean"
    factor: int = 1
    epsilon: float = 0.0
    noise_seed: int = 0

    def __post_init__(self):
        if self.kind not in ("clean", "lowres", "uap"):
            raise ValueError(f"unknown shift kind {self.kind!r}")
        if self.kind == "lowres" and (int(self.factor) != self.factor or self.factor < 2):
            raise ValueError(f"lowres factor must be an integer >= 2, got {self.factor}")
        if self.kind == "uap" and not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"uap epsilon must be in [0, 1], got {self.epsilon}")

    @classmethod
    def parse(cls, spec: str) -> "DomainShift":
        """``clean`` | ``lowres:F`` | ``uap:E[:SEED]`` with E in 1/255 units."""
        parts = spec.split(":")
        try:
            if parts[0] == "clean" and len(parts) == 1:
                return cls()
            if parts[0] == "lowres" and len(parts) == 2:
                return cls("lowres", factor=int(parts[1]))
            if parts[0] == "uap" and len(parts) in (2, 3):
                seed = int(parts[2]) if len(parts) == 3 else 0
                return cls("uap", epsilon=float(parts[1]) / 255.0, noise_seed=seed)
        except ValueError as e:
            raise ValueError(f"bad shift spec {spec!r}: {e}") from None
        raise ValueError(f"bad shift spec {spec!r}")

    def to_json(self) -> dict:
        return {"kind": self.kind, "factor": self.factor, "epsilon": self.epsilon,
                "noise_seed": self.noise_seed}

    @classmethod
    def from_json(cls, d: dict) -> "DomainShift":
        return cls(d["kind"], d.get("factor", 1), d.get("epsilon", 0.0), d.get("noise_seed", 0))


def uap_pattern(shift: DomainShift, shape) -> np.ndarray:
    """The domain's universal noise: +-epsilon signs constant on
    ``UAP_BLOCK``-pixel blocks, drawn once from ``noise_seed``."""
    h, w = shape
    rng = np.random.default_rng([shift.noise_seed, 0x0A9])
    bh, bw = -(-h // UAP_BLOCK), -(-w // UAP_BLOCK)
    signs = rng.choice(np.array([-1.0, 1.0]), size=(bh, bw))
    full = np.repeat(np.repeat(signs, UAP_BLOCK, axis=0), UAP_BLOCK, axis=1)[:h, :w]
    return _frozen(shift.epsilon * full)


def apply_shift(image, shift: DomainShift) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape
    if shift.kind == "clean":
        return _frozen(img.copy())
    if shift.kind == "lowres":
        f = int(shift.factor)
        if f >= min(h, w):
            raise ValueError(f"lowres factor {f} must be below the image size {min(h, w)}")
        ys = np.minimum(np.arange(h) // f, (h - 1) // f)
        xs = np.minimum(np.arange(w) // f, (w - 1) // f)
        nb_y, nb_x = ys[-1] + 1, xs[-1] + 1
        sums = np.zeros((nb_y, nb_x))
        np.add.at(sums, (ys[:, None], xs[None, :]), img)
        counts = np.bincount(ys)[:, None] * np.bincount(xs)[None, :]
        low = sums / counts
        return _frozen(low[ys][:, xs])
    return _frozen(np.clip(img + uap_pattern(shift, img.shape), 0.0, 1.0))


class Sample(NamedTuple):
    image: np.ndarray
    silhouette: np.ndarray
    gt_params: BodyParams
    gt_joints: np.ndarray


class TargetItem(NamedTuple):
    """Label-free view of a sample: what adaptation is allowed to see."""

    image: np.ndarray
    silhouette: np.ndarray


def strip_labels(items) -> list[TargetItem]:
    return [TargetItem(it.image, it.silhouette) for it in items]


def sample_params(rng: np.random.Generator) -> BodyParams:
    phi = rng.uniform(-0.6, 0.6, 10)
    beta = rng.uniform(0.85, 1.15, 3)
    alpha = rng.uniform(-0.3, 0.3)
    s = rng.uniform(0.8, 1.2)
    t = rng.uniform(-8.0, 8.0, 2)
    return BodyParams(phi, beta, alpha, s, t)


def gen_dataset(n: int, seed: int, shift: DomainShift = DomainShift(),
                canvas=(128, 128), style=DEFAULT_STYLE) -> list[Sample]:
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        p = sample_params(rng)
        img = apply_shift(render_image(p, canvas, style), shift)
        out.append(Sample(img, rasterize(p, canvas), p, forward_kinematics(p, canvas)))
    return out


def save_dataset(directory, samples, meta: dict) -> None:
    os.makedirs(directory, exist_ok=True)
    for i, s in enumerate(samples):
        save_pgm(s.image, os.path.join(directory, f"{i:05}.img.pgm"))
        save_pgm(s.silhouette, os.path.join(directory, f"{i:05}.sil.pgm"))
        with open(os.path.join(directory, f"{i:05}.params.json"), "w") as f:
            json.dump(s.gt_params.to_json(), f)
    with open(os.path.join(directory, "manifest.json"), "w") as f:
        json.dump({**meta, "count": len(samples)}, f, indent=1)


def load_manifest(directory) -> dict:
    with open(os.path.join(directory, "manifest.json")) as f:
        return json.load(f)


def load_dataset(directory, labels: bool = True):
    """Samples from disk; with ``labels=False`` only :class:`TargetItem`
    views are built and the params files are never opened."""
    meta = load_manifest(directory)
    canvas = tuple(meta["canvas"])
    out = []
    for i in range(meta["count"]):
        stem = os.path.join(directory, f"{i:05}")
        img = load_pgm(stem + ".img.pgm")
        sil = load_mask(stem + ".sil.pgm")
        if not labels:
            out.append(TargetItem(img, sil))
            continue
        with open(stem + ".params.json") as f:
            p = BodyParams.from_json(json.load(f))
        out.append(Sample(img, sil, p, forward_kinematics(p, canvas)))
    return out


# --- metrics ---------------------------------------------------------------

def mpjpe(pred, gt) -> float:
    """Mean Euclidean joint error in pixels."""
    a, b = np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"joint sets differ: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b, axis=-1).mean())


def _weighted_similarity(a, b, wts):
    """Weighted least-squares similarity taking ``a`` onto ``b``."""
    wts = wts / wts.sum()
    mu_a, mu_b = wts @ a, wts @ b
    a0, b0 = a - mu_a, b - mu_b
    na = float((wts * (a0 ** 2).sum(axis=1)).sum())
    if na <= 1e-18 * max(1.0, float((a ** 2).sum())):
        raise ValueError("degenerate prediction: all joints coincide")
    m = (a0 * wts[:, None]).T @ b0  # weighted cross-covariance
    # rotation part of m's polar factor, as an angle
    theta = np.arctan2(m[0, 1] - m[1, 0], m[0, 0] + m[1, 1])
    c, s = np.cos(theta), np.sin(theta)
    rot = np.array([[c, -s], [s, c]])
    scale = float((wts * ((a0 @ rot.T) * b0).sum(axis=1)).sum() / na)
    return scale, rot, mu_b - scale * (rot @ mu_a)


def procrustes_align(pred, gt) -> tuple[float, np.ndarray, np.ndarray]:
    """Closed-form least-squares similarity (scale, 2x2 rotation,
    translation) taking ``pred`` onto ``gt``; reflections are excluded."""
    a = np.asarray(pred, dtype=np.float64)
    b = np.asarray(gt, dtype=np.float64)
    return _weighted_similarity(a, b, np.ones(len(a)))


def apply_similarity(points, scale, rot, trans) -> np.ndarray:
    return scale * np.asarray(points, dtype=np.float64) @ np.asarray(rot).T + trans


def pa_mpjpe(pred, gt, iters: int = 50) -> float:
    """Mean joint error after similarity alignment.

    Least squares minimises squared error, so on its own it can leave the
    mean error above the unaligned one. Starting from the better of the
    least-squares fit and the identity, iteratively reweighted fits
    (weights 1/residual) are accepted only while the mean error drops,
    which keeps the result at or below ``mpjpe(pred, gt)``.
    """
    a = np.asarray(pred, dtype=np.float64)
    b = np.asarray(gt, dtype=np.float64)
    best = mpjpe(a, b)
    cur = procrustes_align(a, b)
    err = mpjpe(apply_similarity(a, *cur), b)
    if err > best:
        cur, err = (1.0, np.eye(2), np.zeros(2)), best
    best = min(best, err)
    for _ in range(iters):
        resid = np.linalg.norm(apply_similarity(a, *cur) - b, axis=1)
        if resid.max() == 0.0:
            break
        cand = _weighted_similarity(a, b, 1.0 / np.maximum(resid, 1e-9 * (1.0 + resid.max())))
        e = mpjpe(apply_similarity(a, *cand), b)
        if not e < best:
            break
        cur, best = cand, e
    return best


@dataclass
class MetricsReport:
    mpjpe: float
    pa_mpjpe: float
    per_sample: list
    n: int

    def as_dict(self) -> dict:
        return {"mpjpe": self.mpjpe, "pa_mpjpe": self.pa_mpjpe, "n": self.n,
                "per_sample": self.per_sample}


def evaluate_joints(pred_joints, gt_joints) -> MetricsReport:
    per = []
    for p, g in zip(pred_joints, gt_joints):
        e, pe = mpjpe(p, g), pa_mpjpe(p, g)
        if pe > e + 1e-9:
            raise AssertionError(f"PA-MPJPE {pe} exceeds MPJPE {e}")
        per.append([e, pe])
    arr = np.array(per).reshape(-1, 2)
    return MetricsReport(float(arr[:, 0].mean()), float(arr[:, 1].mean()), per, len(per))


def evaluate_regressor(w, samples, canvas=None) -> MetricsReport:
    """MPJPE / PA-MPJPE of the regressor's joints against ground truth."""
    from .regressor import predict

    if canvas is None:
        h, wd = samples[0].silhouette.shape
        canvas = (wd, h)
    theta = predict(w, [s.image for s in samples])
    pred = [forward_kinematics(v, canvas) for v in theta]
    return evaluate_joints(pred, [s.gt_joints for s in samples])


# --- ablation / adaptation experiments ---------------------------------------

# method -> (silhouette loss, skeleton loss)
ABLATION_ROWS = {
    "B1": ("l2", "none"),
    "B2": ("sp", "none"),
    "B3": ("sp", "l2"),
    "Ours": ("sp", "sp"),
}
REPORT_COLUMNS = ("method", "phase", "mpjpe", "pa_mpjpe", "n")


def run_ablation(w, target_items, eval_samples, cfg, methods=tuple(ABLATION_ROWS),
                 jobs: int = 1) -> list[dict]:
    """Adapt ``w`` once per method with the same seed and schedule, swapping
    only the silhouette objective; rows hold pre and post metrics on
    ``eval_samples``. ``target_items`` are stripped of labels first."""
    from dataclasses import replace

    from .adaptation import adapt

    items = strip_labels(target_items)
    pre = evaluate_regressor(w, eval_samples)
    rows = []
    for m in methods:
        sil, topo = ABLATION_ROWS[m]
        adapted, _ = adapt(w, items, replace(cfg, sil_loss=sil, topo_loss=topo), jobs=jobs)
        post = evaluate_regressor(adapted, eval_samples)
        for phase, r in (("pre", pre), ("post", post)):
            rows.append({"method": m, "phase": phase, "mpjpe": r.mpjpe,
                         "pa_mpjpe": r.pa_mpjpe, "n": r.n})
    return rows


def write_report(rows, directory, meta: dict | None = None) -> None:
    """``report.json`` (rows plus metadata) and ``report.csv``."""
    import csv

    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "report.json"), "w") as f:
        json.dump({"meta": meta or {}, "rows": rows}, f, indent=1)
    with open(os.path.join(directory, "report.csv"), "w", newline="") as f:
        wr = csv.writer(f, lineterminator="\n")
        wr.writerow(REPORT_COLUMNS)
        for r in rows:
            wr.writerow([r["method"], r["phase"], repr(r["mpjpe"]), repr(r["pa_mpjpe"]), r["n"]])


@dataclass(frozen=True)
class DeskBenchmark:
    """Fixed-seed desk experiment: a clean source split, a shifted target
    split for adaptation and a disjoint shifted split for evaluation."""

    seed: int = 0
    n_source: int = 2000
    n_target: int = 500
    n_eval: int = 500
    shift: str = "uap:16"
    epochs: int = 200
    lr: float = 1e-3
    canvas: tuple = (128, 128)

    def source(self) -> list[Sample]:
        return gen_dataset(self.n_source, self.seed, DomainShift(), self.canvas)

    def source_eval(self) -> list[Sample]:
        return gen_dataset(self.n_eval, self.seed + 1, DomainShift(), self.canvas)

    # target splits use seeds seed+2 / seed+3 so no target pose repeats a source pose
    def target(self, shift: str | None = None) -> list[TargetItem]:
        sh = DomainShift.parse(shift or self.shift)
        return strip_labels(gen_dataset(self.n_target, self.seed + 2, sh, self.canvas))

    def target_eval(self, shift: str | None = None) -> list[Sample]:
        sh = DomainShift.parse(shift or self.shift)
        return gen_dataset(self.n_eval, self.seed + 3, sh, self.canvas)

    def train(self):
        from .adaptation import train_source

        return train_source(self.source(), epochs=self.epochs, lr=self.lr, seed=self.seed)
