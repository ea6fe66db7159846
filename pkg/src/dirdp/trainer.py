"""Private SGD on a bag-of-words softmax classifier (optionally one tanh hidden layer).

The training loop is mechanism-agnostic: per-sample gradients for a lot go
through :func:`dirdp.mechanisms.dp_noise_step` and the result is applied as
a plain SGD step.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import log_softmax

from .data import Dataset, Split
from .mechanisms import NoiseSpec, dp_noise_step

log = logging.getLogger(__name__)

MODEL_FORMAT = "dirdp-model"
MODEL_VERSION = 1


class DivergenceError(FloatingPointError):
    """Training produced a non-finite loss or parameter."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.5
    lot_size: int = 64
    epochs: int = 10
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    seed: int = 0
    hidden_dim: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.lot_size < 1 or self.epochs < 1:
            raise ValueError("lot_size and epochs must be positive")
        if self.hidden_dim < 0:
            raise ValueError("hidden_dim must be >= 0")


@dataclass
class ModelParams:
    """Flat parameter vector plus the layer layout needed to unpack it."""

    theta: np.ndarray
    n_features: int
    n_classes: int
    hidden_dim: int = 0

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        if self.theta.size != sum(math.prod(s) for _, s in self.layout):
            raise ValueError("theta size does not match the layer layout")

    @property
    def layout(self) -> list[tuple[str, tuple[int, ...]]]:
        V, C, H = self.n_features, self.n_classes, self.hidden_dim
        if H == 0:
            return [("W", (C, V)), ("b", (C,))]
        return [("W1", (H, V)), ("b1", (H,)), ("W2", (C, H)), ("b2", (C,))]

    @property
    def input_block(self) -> tuple[slice, slice]:
        """Slices of the input-layer weight matrix and its bias inside theta."""
        rows = self.n_classes if self.hidden_dim == 0 else self.hidden_dim
        w = rows * self.n_features
        return slice(0, w), slice(w, w + rows)

    @property
    def size(self) -> int:
        return self.theta.size

    def unpack(self, theta=None) -> dict[str, np.ndarray]:
        theta = self.theta if theta is None else theta
        out, pos = {}, 0
        for name, shape in self.layout:
            n = math.prod(shape)
            out[name] = theta[pos:pos + n].reshape(shape)
            pos += n
        return out

    def copy(self) -> "ModelParams":
        return ModelParams(self.theta.copy(), self.n_features, self.n_classes, self.hidden_dim)

    def compatible_with(self, other: "ModelParams") -> bool:
        return (self.n_features, self.n_classes, self.hidden_dim) == (
            other.n_features, other.n_classes, other.hidden_dim)

    @classmethod
    def init(cls, n_features, n_classes, hidden_dim=0, rng=None) -> "ModelParams":
        """Zeros for the linear model; scaled uniform for the MLP."""
        sizes = ([(n_classes, n_features), (n_classes,)] if hidden_dim == 0 else
                 [(hidden_dim, n_features), (hidden_dim,), (n_classes, hidden_dim), (n_classes,)])
        total = sum(math.prod(s) for s in sizes)
        if hidden_dim == 0:
            return cls(np.zeros(total), n_features, n_classes, 0)
        if rng is None:
            raise ValueError("MLP initialisation needs an rng")
        parts = []
        for shape in sizes:
            fan_in = shape[1] if len(shape) == 2 else 1
            if len(shape) == 1:
                parts.append(np.zeros(shape))
            else:
                bound = 1.0 / math.sqrt(fan_in)
                parts.append(rng.uniform(-bound, bound, size=shape))
        return cls(np.concatenate([p.ravel() for p in parts]), n_features, n_classes, hidden_dim)


def _forward(params: ModelParams, X, theta=None):
    p = params.unpack(theta)
    if params.hidden_dim == 0:
        return X @ p["W"].T + p["b"], None
    h = np.tanh(X @ p["W1"].T + p["b1"])
    return h @ p["W2"].T + p["b2"], h


def logits(params: ModelParams, X) -> np.ndarray:
    return _forward(params, np.atleast_2d(X))[0]


def per_sample_losses(params: ModelParams, X, y, theta=None) -> np.ndarray:
    """Cross-entropy loss of each example."""
    z, _ = _forward(params, np.atleast_2d(X), theta)
    y = np.atleast_1d(y)
    return -log_softmax(z, axis=1)[np.arange(len(y)), y]


def per_sample_gradients(params: ModelParams, X, y):
    """Exact per-example gradients of the cross-entropy loss.

    Returns ``(grads, losses)`` with ``grads`` of shape (n, params.size),
    laid out like ``params.theta``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.atleast_1d(y)
    n = X.shape[0]
    z, h = _forward(params, X)
    logp = log_softmax(z, axis=1)
    losses = -logp[np.arange(n), y]
    r = np.exp(logp)
    r[np.arange(n), y] -= 1.0  # dL/dz = softmax - onehot

    if params.hidden_dim == 0:
        gW = r[:, :, None] * X[:, None, :]
        return np.concatenate([gW.reshape(n, -1), r], axis=1), losses

    W2 = params.unpack()["W2"]
    gW2 = r[:, :, None] * h[:, None, :]
    delta = (r @ W2) * (1.0 - h * h)
    gW1 = delta[:, :, None] * X[:, None, :]
    grads = np.concatenate(
        [gW1.reshape(n, -1), delta, gW2.reshape(n, -1), r], axis=1
    )
    return grads, losses


def per_sample_gradient(params: ModelParams, x, label) -> np.ndarray:
    """Gradient of the loss on a single example."""
    return per_sample_gradients(params, np.asarray(x)[None, :], [label])[0][0]


def predict(params: ModelParams, X) -> np.ndarray:
    return np.argmax(logits(params, X), axis=1)


def matthews_corrcoef(y_true, y_pred, n_classes=None) -> float:
    """MCC from the confusion matrix (Gorodkin's form, binary case included).

    A zero denominator (e.g. constant predictions) gives 0.
    """
    y_true = np.asarray(y_true, dtype=int)
    y_pred = np.asarray(y_pred, dtype=int)
    k = n_classes or int(max(y_true.max(initial=0), y_pred.max(initial=0)) + 1)
    cm = np.zeros((k, k))
    np.add.at(cm, (y_true, y_pred), 1)
    t = cm.sum(axis=1)
    p = cm.sum(axis=0)
    c = np.trace(cm)
    s = cm.sum()
    num = c * s - t @ p
    den = math.sqrt(s * s - p @ p) * math.sqrt(s * s - t @ t)
    return float(num / den) if den > 0 else 0.0


def evaluate(params: ModelParams, split: Split) -> dict:
    if len(split) == 0:
        raise ValueError(f"cannot evaluate on empty split {split.name!r}")
    losses = per_sample_losses(params, split.X, split.y)
    pred = predict(params, split.X)
    return {
        "accuracy": float(np.mean(pred == split.y)),
        "mcc": matthews_corrcoef(split.y, pred, params.n_classes),
        "mean_loss": float(np.mean(losses)),
    }


def train_test_gap(params: ModelParams, data: Dataset) -> float:
    """Train minus test accuracy, in percentage points."""
    return 100.0 * (evaluate(params, data.train)["accuracy"] - evaluate(params, data.test)["accuracy"])


def _streams(seed: int):
    init, sampling, noise = np.random.SeedSequence(seed).spawn(3)
    return (np.random.default_rng(init), np.random.default_rng(sampling),
            np.random.default_rng(noise))


def private_train(data: Dataset, cfg: TrainConfig, split: Split | None = None):
    """Run ``cfg.epochs`` passes of lot-wise private SGD.

    Each epoch shuffles the training split and walks it in lots of
    ``cfg.lot_size`` (the last lot may be smaller), so there are
    ``epochs * ceil(N / L)`` steps. ``split`` overrides ``data.train`` as the
    training set (used for reference and shadow models).

    Returns ``(params, history)``; ``history`` has one dict per epoch.
    """
    train = data.train if split is None else split
    N = len(train)
    if N == 0:
        raise ValueError("empty training split")
    if cfg.lot_size > N:
        raise ValueError(f"lot_size {cfg.lot_size} exceeds training size {N}")
    init_rng, sample_rng, noise_rng = _streams(cfg.seed)
    params = ModelParams.init(train.X.shape[1], data.n_classes, cfg.hidden_dim, init_rng)
    history = []
    for epoch in range(1, cfg.epochs + 1):
        order = sample_rng.permutation(N)
        n_degenerate = 0
        for start in range(0, N, cfg.lot_size):
            lot = order[start:start + cfg.lot_size]
            grads, losses = per_sample_gradients(params, train.X[lot], train.y[lot])
            if not np.all(np.isfinite(losses)):
                raise DivergenceError(f"non-finite loss at epoch {epoch}, step offset {start}")
            if cfg.noise.kind == "vmf":
                n_degenerate += int(np.count_nonzero(~grads.any(axis=1)))
            step = dp_noise_step(grads, cfg.noise, noise_rng)
            params.theta -= cfg.learning_rate * step
            if not np.all(np.isfinite(params.theta)):
                raise DivergenceError(f"non-finite parameters at epoch {epoch}")
        tr = evaluate(params, train)
        row = {"epoch": epoch, "train_accuracy": tr["accuracy"], "train_mcc": tr["mcc"],
               "train_loss": tr["mean_loss"], "zero_gradients": n_degenerate}
        if len(data.validation):
            va = evaluate(params, data.validation)
            row.update(val_accuracy=va["accuracy"], val_mcc=va["mcc"], val_loss=va["mean_loss"])
        if not math.isfinite(tr["mean_loss"]):
            raise DivergenceError(f"non-finite training loss after epoch {epoch}")
        log.debug("epoch %d %s", epoch, row)
        history.append(row)
    return params, history


def save_model(path, params: ModelParams, vocabulary: dict, metadata: dict | None = None):
    """Write a portable JSON model file (layout + flat parameters + vocabulary)."""
    inv = sorted(vocabulary, key=vocabulary.get)
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "n_features": params.n_features,
        "n_classes": params.n_classes,
        "hidden_dim": params.hidden_dim,
        "layout": [[name, list(shape)] for name, shape in params.layout],
        "vocabulary": inv,
        "metadata": metadata or {},
        "theta": [float(v) for v in params.theta],
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")


def load_model(path) -> tuple[ModelParams, dict, dict]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path}: not a {MODEL_FORMAT} file")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"{path}: unsupported model version {doc.get('version')}")
    params = ModelParams(np.array(doc["theta"]), doc["n_features"], doc["n_classes"], doc["hidden_dim"])
    vocab = {tok: i for i, tok in enumerate(doc["vocabulary"])}
    return params, vocab, doc.get("metadata", {})
