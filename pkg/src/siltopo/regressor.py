"""Image -> body-parameter regressor: a 1024-64-64-17 tanh MLP.

Input is the grayscale image box-averaged to 32x32 and mapped to [-1, 1].
The raw 17 outputs pass through fixed heads so every prediction is a
valid parameter vector: phi = tanh, beta = 1 + 0.5 tanh, alpha raw,
s = exp, t raw.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .body import ALPHA, BETA, PHI, SCALE, TRANS, BodyParams
from .body_constants import PARAM_DIM

INPUT_SIDE = 32
HIDDEN = 64
LAYER_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3")


def downsample(image, side: int = INPUT_SIDE) -> np.ndarray:
    """Box-average a 2-D map onto a ``side x side`` grid (bins by index)."""
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape
    if h % side == 0 and w % side == 0:
        return img.reshape(side, h // side, side, w // side).mean(axis=(1, 3))
    ye = np.round(np.linspace(0, h, side + 1)).astype(int)
    xe = np.round(np.linspace(0, w, side + 1)).astype(int)
    out = np.empty((side, side))
    for i in range(side):
        for j in range(side):
            out[i, j] = img[ye[i]:max(ye[i + 1], ye[i] + 1), xe[j]:max(xe[j + 1], xe[j] + 1)].mean()
    return out


def features(image) -> np.ndarray:
    return 2.0 * downsample(image).reshape(-1) - 1.0


def features_batch(images) -> np.ndarray:
    return np.stack([features(im) for im in images]) if len(images) else np.zeros((0, INPUT_SIDE ** 2))


@dataclass
class RegressorWeights:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray

    @classmethod
    def init(cls, seed: int | np.random.Generator = 0) -> "RegressorWeights":
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        n_in = INPUT_SIDE ** 2

        def glorot(a, b):
            return rng.normal(0.0, np.sqrt(2.0 / (a + b)), size=(a, b))

        return cls(glorot(n_in, HIDDEN), np.zeros(HIDDEN),
                   glorot(HIDDEN, HIDDEN), np.zeros(HIDDEN),
                   glorot(HIDDEN, PARAM_DIM) * 0.1, np.zeros(PARAM_DIM))

    @classmethod
    def zeros(cls) -> "RegressorWeights":
        n_in = INPUT_SIDE ** 2
        return cls(np.zeros((n_in, HIDDEN)), np.zeros(HIDDEN), np.zeros((HIDDEN, HIDDEN)),
                   np.zeros(HIDDEN), np.zeros((HIDDEN, PARAM_DIM)), np.zeros(PARAM_DIM))

    def arrays(self) -> dict:
        return {k: getattr(self, k) for k in LAYER_NAMES}

    def copy(self) -> "RegressorWeights":
        return RegressorWeights(**{k: v.copy() for k, v in self.arrays().items()})

    def to_json(self) -> dict:
        return {"architecture": [INPUT_SIDE ** 2, HIDDEN, HIDDEN, PARAM_DIM],
                "layers": [{"W": self.W1.tolist(), "b": self.b1.tolist()},
                           {"W": self.W2.tolist(), "b": self.b2.tolist()},
                           {"W": self.W3.tolist(), "b": self.b3.tolist()}]}

    @classmethod
    def from_json(cls, d: dict) -> "RegressorWeights":
        if d.get("architecture") != [INPUT_SIDE ** 2, HIDDEN, HIDDEN, PARAM_DIM]:
            raise ValueError(f"unsupported architecture {d.get('architecture')}")
        (l1, l2, l3) = d["layers"]
        w = cls(*(np.asarray(x, dtype=np.float64) for x in
                  (l1["W"], l1["b"], l2["W"], l2["b"], l3["W"], l3["b"])))
        ref = cls.zeros()
        for k in LAYER_NAMES:
            if getattr(w, k).shape != getattr(ref, k).shape:
                raise ValueError(f"layer {k} has shape {getattr(w, k).shape}")
            if not np.all(np.isfinite(getattr(w, k))):
                raise ValueError(f"layer {k} holds non-finite weights")
        return w

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json(), f)

    @classmethod
    def load(cls, path) -> "RegressorWeights":
        with open(path) as f:
            return cls.from_json(json.load(f))


def forward(w: RegressorWeights, x: np.ndarray):
    """Batch forward on features ``x`` (n, 1024); returns (theta, cache)."""
    h1 = np.tanh(x @ w.W1 + w.b1)
    h2 = np.tanh(h1 @ w.W2 + w.b2)
    z = h2 @ w.W3 + w.b3
    return heads(z), (x, h1, h2, z)


def heads(z: np.ndarray) -> np.ndarray:
    theta = np.empty_like(z)
    theta[..., PHI] = np.tanh(z[..., PHI])
    theta[..., BETA] = 1.0 + 0.5 * np.tanh(z[..., BETA])
    theta[..., ALPHA] = z[..., ALPHA]
    theta[..., SCALE] = np.exp(z[..., SCALE])
    theta[..., TRANS] = z[..., TRANS]
    return theta


def head_derivative(z: np.ndarray) -> np.ndarray:
    """Elementwise d theta / d z (the heads are diagonal)."""
    d = np.ones_like(z)
    d[..., PHI] = 1.0 - np.tanh(z[..., PHI]) ** 2
    d[..., BETA] = 0.5 * (1.0 - np.tanh(z[..., BETA]) ** 2)
    d[..., SCALE] = np.exp(z[..., SCALE])
    return d


def backward(w: RegressorWeights, cache, d_theta: np.ndarray) -> RegressorWeights:
    """Reverse-mode gradient for an upstream gradient ``d_theta`` (n, 17),
    summed over the batch."""
    x, h1, h2, z = cache
    dz = d_theta * head_derivative(z)
    g3 = h2.T @ dz
    gb3 = dz.sum(axis=0)
    da2 = (dz @ w.W3.T) * (1.0 - h2 ** 2)
    g2 = h1.T @ da2
    gb2 = da2.sum(axis=0)
    da1 = (da2 @ w.W2.T) * (1.0 - h1 ** 2)
    g1 = x.T @ da1
    gb1 = da1.sum(axis=0)
    return RegressorWeights(g1, gb1, g2, gb2, g3, gb3)


def regressor_forward(w: RegressorWeights, image) -> BodyParams:
    theta, _ = forward(w, features(image)[None, :])
    return BodyParams.from_vector(theta[0])


def predict(w: RegressorWeights, images) -> np.ndarray:
    """Parameter vectors (n, 17) for a list of images."""
    theta, _ = forward(w, features_batch(images))
    return theta


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict = {}
        self.v: dict = {}

    def step(self, w: RegressorWeights, g: RegressorWeights) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k in LAYER_NAMES:
            gk = getattr(g, k)
            m = self.m.setdefault(k, np.zeros_like(gk))
            v = self.v.setdefault(k, np.zeros_like(gk))
            m *= self.beta1
            m += (1.0 - self.beta1) * gk
            v *= self.beta2
            v += (1.0 - self.beta2) * gk * gk
            if self.lr:
                getattr(w, k)[...] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, w: RegressorWeights, g: RegressorWeights) -> None:
        if self.lr:
            for k in LAYER_NAMES:
                getattr(w, k)[...] -= self.lr * getattr(g, k)


def make_optimizer(kind: str, lr: float):
    if kind == "adam":
        return Adam(lr)
    if kind == "sgd":
        return SGD(lr)
    raise ValueError(f"unknown optimizer {kind!r}")
