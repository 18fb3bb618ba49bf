"""The target classifier: a one-hidden-layer network trained by mini-batch SGD.

Width 0 degrades to plain softmax regression.  Training is retrained from
scratch each active-learning iteration, so everything here is deterministic
given (data, config): initialization comes from the config seed and each
epoch's shuffle from a seed derived per epoch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .superloss import SuperLossConfig, sigma_weights
from .util import NumericError, rng_from

LOSS_MODES = ("plain-ce", "superloss")
PROB_FLOOR = 1e-30


@dataclass(frozen=True)
class TrainConfig:
    hidden: int = 32
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 0.0
    seed: int = 0
    loss_mode: str = "plain-ce"
    superloss: SuperLossConfig | None = None

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.hidden < 0:
            raise ValueError("hidden must be >= 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.loss_mode not in LOSS_MODES:
            raise ValueError(f"unknown loss_mode {self.loss_mode!r}")


@dataclass
class ModelParams:
    w1: np.ndarray  # (dim, hidden); empty second axis when hidden == 0
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden or dim, num_classes)
    b2: np.ndarray  # (num_classes,)

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]

    @property
    def dim(self) -> int:
        return self.w1.shape[0] if self.hidden else self.w2.shape[0]

    @property
    def num_classes(self) -> int:
        return self.b2.shape[0]

    def copy(self) -> "ModelParams":
        return ModelParams(self.w1.copy(), self.b1.copy(),
                           self.w2.copy(), self.b2.copy())


def init_params(dim: int, hidden: int, num_classes: int, seed: int) -> ModelParams:
    """Uniform init in +-1/sqrt(fan_in) per layer, drawn in a fixed order."""
    rng = rng_from(seed)
    if hidden > 0:
        lim1 = 1.0 / math.sqrt(dim)
        w1 = rng.uniform(-lim1, lim1, size=(dim, hidden))
        b1 = rng.uniform(-lim1, lim1, size=hidden)
        lim2 = 1.0 / math.sqrt(hidden)
        w2 = rng.uniform(-lim2, lim2, size=(hidden, num_classes))
        b2 = rng.uniform(-lim2, lim2, size=num_classes)
    else:
        w1 = np.zeros((dim, 0))
        b1 = np.zeros(0)
        lim2 = 1.0 / math.sqrt(dim)
        w2 = rng.uniform(-lim2, lim2, size=(dim, num_classes))
        b2 = rng.uniform(-lim2, lim2, size=num_classes)
    return ModelParams(w1, b1, w2, b2)


def _as_matrix(params: ModelParams, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.dim:
        raise ValueError(f"expected features of dimension {params.dim}")
    return x, single


def features(params: ModelParams, x) -> np.ndarray:
    """Penultimate activations; the input itself when there is no hidden layer."""
    x, single = _as_matrix(params, x)
    h = np.maximum(x @ params.w1 + params.b1, 0.0) if params.hidden else x
    return h[0] if single else h


def logits(params: ModelParams, x) -> np.ndarray:
    x, single = _as_matrix(params, x)
    h = np.maximum(x @ params.w1 + params.b1, 0.0) if params.hidden else x
    z = h @ params.w2 + params.b2
    return z[0] if single else z


def predict_proba(params: ModelParams, x) -> np.ndarray:
    """Softmax probabilities; rows sum to 1."""
    z = logits(params, x)
    z2 = z if z.ndim == 2 else z[None, :]
    z2 = z2 - z2.max(axis=1, keepdims=True)
    p = np.exp(z2)
    p /= p.sum(axis=1, keepdims=True)
    return p if z.ndim == 2 else p[0]


def cross_entropy(probs, label: int) -> float:
    """-log p[label], capped at -log(1e-30) when the probability underflows."""
    probs = np.asarray(probs, dtype=np.float64)
    return float(-np.log(max(float(probs[label]), PROB_FLOOR)))


def _batch_cross_entropy(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    picked = probs[np.arange(len(labels)), labels]
    return -np.log(np.maximum(picked, PROB_FLOOR))


def accuracy(params: ModelParams, samples) -> float:
    """Fraction of argmax-correct predictions (ties go to the lowest class)."""
    samples = list(samples)
    if not samples:
        raise ValueError("accuracy of an empty sample set is undefined")
    x = np.stack([s.features for s in samples])
    y = np.array([s.label for s in samples])
    preds = np.argmax(predict_proba(params, x), axis=1)
    return float(np.mean(preds == y))


def total_loss(params: ModelParams, x: np.ndarray, y: np.ndarray,
               weight_decay: float = 0.0) -> float:
    """Mean cross entropy plus (wd/2) * squared weight norms (biases excluded)."""
    p = predict_proba(params, x)
    loss = float(_batch_cross_entropy(p, y).mean())
    if weight_decay:
        loss += 0.5 * weight_decay * (float((params.w1 ** 2).sum())
                                      + float((params.w2 ** 2).sum()))
    return loss


def gradients(params: ModelParams, x: np.ndarray, y: np.ndarray,
              weight_decay: float = 0.0,
              sample_weights: np.ndarray | None = None):
    """Analytic gradients of total_loss (optionally with per-sample weights).

    Returns (grads, mean_plain_ce) where grads mirrors the ModelParams fields.
    """
    n = x.shape[0]
    # divergence shows up as non-finite logits; the caller checks the loss
    with np.errstate(invalid="ignore", over="ignore"):
        hid = np.maximum(x @ params.w1 + params.b1, 0.0) if params.hidden else x
        z = hid @ params.w2 + params.b2
        z = z - z.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
    plain = float(_batch_cross_entropy(p, y).mean())

    dlogits = p.copy()
    dlogits[np.arange(n), y] -= 1.0
    if sample_weights is not None:
        dlogits *= sample_weights[:, None]
    dlogits /= n

    dw2 = hid.T @ dlogits + weight_decay * params.w2
    db2 = dlogits.sum(axis=0)
    if params.hidden:
        dhid = dlogits @ params.w2.T
        dhid[hid <= 0.0] = 0.0
        dw1 = x.T @ dhid + weight_decay * params.w1
        db1 = dhid.sum(axis=0)
    else:
        dw1 = np.zeros_like(params.w1)
        db1 = np.zeros_like(params.b1)
    return ModelParams(dw1, db1, dw2, db2), plain


def train_from_scratch(labeled_samples, config: TrainConfig,
                       num_classes: int | None = None) -> ModelParams:
    params, _ = _train(labeled_samples, config, num_classes, track=False)
    return params


def train_with_history(labeled_samples, config: TrainConfig,
                       num_classes: int | None = None):
    """Like train_from_scratch but also returns full-data CE after each epoch."""
    return _train(labeled_samples, config, num_classes, track=True)


def _train(labeled_samples, config, num_classes, track):
    samples = list(labeled_samples)
    if not samples:
        raise ValueError("cannot train on an empty labeled set")
    x = np.stack([s.features for s in samples]).astype(np.float64)
    y = np.array([s.label for s in samples], dtype=np.int64)
    n, dim = x.shape
    if num_classes is None:
        num_classes = int(y.max()) + 1
    elif y.max() >= num_classes:
        raise ValueError("label outside the declared class range")

    sl_cfg = None
    if config.loss_mode == "superloss":
        sl_cfg = (config.superloss or SuperLossConfig()).resolved(num_classes)

    params = init_params(dim, config.hidden, num_classes, config.seed)
    vel = ModelParams(np.zeros_like(params.w1), np.zeros_like(params.b1),
                      np.zeros_like(params.w2), np.zeros_like(params.b2))
    history = []
    for epoch in range(config.epochs):
        order = rng_from(config.seed, epoch + 1).permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            xb, yb = x[idx], y[idx]
            weights = None
            if sl_cfg is not None:
                pb = predict_proba(params, xb)
                weights = sigma_weights(_batch_cross_entropy(pb, yb), sl_cfg)
            grads, plain = gradients(params, xb, yb, config.weight_decay, weights)
            if not math.isfinite(plain):
                raise NumericError(
                    f"non-finite training loss at epoch {epoch}, "
                    f"batch {start // config.batch_size}"
                )
            for name in ("w1", "b1", "w2", "b2"):
                g = getattr(grads, name)
                v = getattr(vel, name)
                v *= config.momentum
                v += g
                getattr(params, name)[...] -= config.learning_rate * v
        if track:
            history.append(total_loss(params, x, y))
    return params, history


def save_params(params: ModelParams, path) -> None:
    """Checkpoint as a zip of named arrays (numpy .npz)."""
    np.savez(path, w1=params.w1, b1=params.b1, w2=params.w2, b2=params.b2)


def load_params(path) -> ModelParams:
    with np.load(path) as data:
        return ModelParams(data["w1"], data["b1"], data["w2"], data["b2"])
