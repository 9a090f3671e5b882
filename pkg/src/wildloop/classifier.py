"""Trainable softmax classification head over frozen embeddings.

The head is linear by default; an optional single tanh hidden layer is
available through ``TrainConfig.hidden_units``.  Parameters and all loss and
gradient accumulation are float64 even when embeddings arrive as float32,
which keeps finite-difference checks tight.  Training is plain mini-batch
gradient descent on cross-entropy with an L2 penalty on the weight matrices
(biases excluded), deterministic for a fixed seed.

Stability: on data with feature scale r, per-epoch loss is non-increasing
for learning rates below roughly 2 / (r^2 + l2); the defaults stay well
inside that bound for unit-scale embeddings.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import (
    CorruptState,
    DimensionMismatch,
    EmptyTrainingSet,
    UnknownLabel,
)
from .ingest import LabelSpace

CHECKPOINT_MAGIC = b"WLHEAD1\n"

CLASS_WEIGHTINGS = ("none", "inverse_frequency")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 30
    batch_size: int = 64
    l2: float = 1e-4
    seed: int = 0
    class_weighting: str = "inverse_frequency"
    hidden_units: int | None = None

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("epochs and batch_size must be positive")
        if self.class_weighting not in CLASS_WEIGHTINGS:
            raise ValueError(f"class_weighting must be one of {CLASS_WEIGHTINGS}")
        if self.hidden_units is not None and self.hidden_units < 1:
            raise ValueError("hidden_units must be >= 1 when set")


@dataclass
class HeadModel:
    """Softmax head: ``weights`` is (g, dim) for the linear head, or
    (g, hidden) stacked on a (hidden, dim) tanh layer when hidden_units is
    configured."""

    label_space: LabelSpace
    dim: int
    weights: np.ndarray
    bias: np.ndarray
    train_config: TrainConfig
    hidden_weights: np.ndarray | None = None
    hidden_bias: np.ndarray | None = None
    provenance: str = "cold"

    @property
    def n_classes(self) -> int:
        return len(self.label_space)

    def copy(self) -> "HeadModel":
        return HeadModel(
            label_space=self.label_space,
            dim=self.dim,
            weights=self.weights.copy(),
            bias=self.bias.copy(),
            train_config=self.train_config,
            hidden_weights=None if self.hidden_weights is None else self.hidden_weights.copy(),
            hidden_bias=None if self.hidden_bias is None else self.hidden_bias.copy(),
            provenance=self.provenance,
        )


def cold_start(label_space: LabelSpace, dim: int, config: TrainConfig = TrainConfig()) -> HeadModel:
    """Freshly initialized head: weights ~ U(+-1/sqrt(fan_in)), biases zero."""
    g = len(label_space)
    rng = np.random.default_rng(config.seed)
    hidden_w = hidden_b = None
    fan_in = dim
    if config.hidden_units:
        bound = 1.0 / np.sqrt(dim)
        hidden_w = rng.uniform(-bound, bound, size=(config.hidden_units, dim))
        hidden_b = np.zeros(config.hidden_units)
        fan_in = config.hidden_units
    bound = 1.0 / np.sqrt(fan_in)
    weights = rng.uniform(-bound, bound, size=(g, fan_in))
    return HeadModel(
        label_space=label_space,
        dim=dim,
        weights=weights,
        bias=np.zeros(g),
        train_config=config,
        hidden_weights=hidden_w,
        hidden_bias=hidden_b,
        provenance="cold",
    )


def warm_start(source: HeadModel, new_space: LabelSpace, dim: int, source_ref: str = "") -> HeadModel:
    """New head reusing source parameters where class names overlap.

    Output rows (and bias entries) for shared classes are copied bit-exactly
    from the source; rows for new classes come from the cold initializer.
    The hidden layer, when present, is class-agnostic and transfers whenever
    any class is shared; with fully disjoint spaces the result equals a cold
    start except for its provenance.
    """
    if dim != source.dim:
        raise DimensionMismatch(f"warm start dim {dim} != source dim {source.dim}")
    head = cold_start(new_space, dim, source.train_config)
    overlap = [c for c in new_space.classes if c in source.label_space]
    for name in overlap:
        head.weights[new_space.index(name)] = source.weights[source.label_space.index(name)]
        head.bias[new_space.index(name)] = source.bias[source.label_space.index(name)]
    if overlap and source.hidden_weights is not None:
        head.hidden_weights = source.hidden_weights.copy()
        head.hidden_bias = source.hidden_bias.copy()
    head.provenance = f"warm:{source_ref}" if source_ref else "warm"
    return head


def _check_features(head: HeadModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != head.dim:
        raise DimensionMismatch(f"features have dim {X.shape[1]}, head expects {head.dim}")
    return X


def class_indices(label_space: LabelSpace, labels) -> np.ndarray:
    idx = np.empty(len(labels), dtype=np.int64)
    for i, name in enumerate(labels):
        idx[i] = label_space.index(name)
    return idx


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def predict_scores(head: HeadModel, emb) -> np.ndarray:
    """Softmax class scores; (g,) for a single vector, (n, g) for a batch."""
    arr = np.asarray(emb, dtype=np.float64)
    single = arr.ndim == 1
    X = _check_features(head, arr)
    if head.hidden_weights is not None:
        X = np.tanh(X @ head.hidden_weights.T + head.hidden_bias)
    scores = _softmax(X @ head.weights.T + head.bias)
    return scores[0] if single else scores


def _loss_and_grads(head, X, y, sample_w, l2):
    """Objective value and gradients w.r.t. every parameter array."""
    if head.hidden_weights is None:
        loss, g_w, g_b = kernels.softmax_xent(
            X, y, sample_w, head.weights, head.bias, l2
        )
        return loss, {"weights": g_w, "bias": g_b}
    W1, b1 = head.hidden_weights, head.hidden_bias
    W2, b2 = head.weights, head.bias
    H = np.tanh(X @ W1.T + b1)
    probs = _softmax(H @ W2.T + b2)
    n = X.shape[0]
    w_total = sample_w.sum()
    loss = -(sample_w * np.log(probs[np.arange(n), y])).sum() / w_total
    loss += 0.5 * l2 * (float((W1 * W1).sum()) + float((W2 * W2).sum()))
    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta *= (sample_w / w_total)[:, None]
    g_w2 = delta.T @ H + l2 * W2
    g_b2 = delta.sum(axis=0)
    d_hidden = (delta @ W2) * (1.0 - H * H)
    g_w1 = d_hidden.T @ X + l2 * W1
    g_b1 = d_hidden.sum(axis=0)
    return loss, {
        "weights": g_w2,
        "bias": g_b2,
        "hidden_weights": g_w1,
        "hidden_bias": g_b1,
    }


def gradient(head: HeadModel, X, labels):
    """Analytic gradient of mean cross-entropy + L2 over the batch.

    Returns (loss, grads) where grads maps parameter names to arrays of the
    matching shapes.  Unweighted: duplicating the batch leaves the result
    unchanged.
    """
    X = _check_features(head, X)
    y = class_indices(head.label_space, labels) if not isinstance(labels, np.ndarray) else labels
    sample_w = np.ones(X.shape[0])
    return _loss_and_grads(head, X, y, sample_w, head.train_config.l2)


def _class_sample_weights(y: np.ndarray, g: int, mode: str) -> np.ndarray:
    if mode == "none":
        return np.ones(y.shape[0])
    counts = np.bincount(y, minlength=g).astype(np.float64)
    present = counts > 0
    class_w = np.zeros(g)
    class_w[present] = y.shape[0] / (present.sum() * counts[present])
    return class_w[y]


def train(head: HeadModel, X, labels) -> tuple[HeadModel, list[float]]:
    """Mini-batch gradient descent; returns the trained head and the
    per-epoch mean objective.

    Deterministic for a fixed (data, config, seed): the epoch shuffles come
    from one seeded generator and batch reductions run in a fixed order.
    """
    X = _check_features(head, X)
    n = X.shape[0]
    if n == 0:
        raise EmptyTrainingSet("no training examples")
    if len(labels) != n:
        raise DimensionMismatch(f"{n} feature rows but {len(labels)} labels")
    y = class_indices(head.label_space, labels) if not isinstance(labels, np.ndarray) else labels

    cfg = head.train_config
    sample_w = _class_sample_weights(y, head.n_classes, cfg.class_weighting)
    out = head.copy()
    rng = np.random.default_rng(cfg.seed)
    curve = []
    params = ["weights", "bias"]
    if out.hidden_weights is not None:
        params += ["hidden_weights", "hidden_bias"]
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            loss, grads = _loss_and_grads(
                out, X[batch], y[batch], sample_w[batch], cfg.l2
            )
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite training loss {loss}")
            for name in params:
                arr = getattr(out, name)
                arr -= cfg.learning_rate * grads[name]
            epoch_losses.append(loss)
        curve.append(float(np.mean(epoch_losses)))
    return out, curve


# --- checkpoints -------------------------------------------------------------


def save_checkpoint(head: HeadModel, path) -> None:
    """Versioned binary checkpoint; parameters stored as float64 LE."""
    path = Path(path)
    cfg = head.train_config
    header = {
        "classes": list(head.label_space.classes),
        "dim": head.dim,
        "provenance": head.provenance,
        "hidden_units": cfg.hidden_units,
        "train_config": {
            "learning_rate": cfg.learning_rate,
            "epochs": cfg.epochs,
            "batch_size": cfg.batch_size,
            "l2": cfg.l2,
            "seed": cfg.seed,
            "class_weighting": cfg.class_weighting,
            "hidden_units": cfg.hidden_units,
        },
    }
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
        for arr in (head.hidden_weights, head.hidden_bias, head.weights, head.bias):
            if arr is not None:
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    tmp.replace(path)


def load_checkpoint(path) -> HeadModel:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            magic = fh.read(len(CHECKPOINT_MAGIC))
            if magic != CHECKPOINT_MAGIC:
                raise CorruptState(f"bad checkpoint magic in {path.name}")
            (hlen,) = struct.unpack("<I", fh.read(4))
            header = json.loads(fh.read(hlen).decode("utf-8"))
            body = fh.read()
    except OSError as exc:
        raise CorruptState(f"cannot read checkpoint {path}: {exc}") from exc

    label_space = LabelSpace(tuple(header["classes"]))
    dim = int(header["dim"])
    cfg = TrainConfig(**header["train_config"])
    g = len(label_space)
    hidden = header.get("hidden_units")
    fan_in = hidden if hidden else dim
    offset = 0

    def take(shape):
        nonlocal offset
        count = int(np.prod(shape))
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=offset).reshape(shape)
        offset += count * 8
        return arr.astype(np.float64)

    expected = (g * fan_in + g + (hidden * dim + hidden if hidden else 0)) * 8
    if len(body) != expected:
        raise CorruptState(
            f"checkpoint {path.name} has {len(body)} parameter bytes, expected {expected}"
        )
    hidden_w = take((hidden, dim)) if hidden else None
    hidden_b = take((hidden,)) if hidden else None
    weights = take((g, fan_in))
    bias = take((g,))
    return HeadModel(
        label_space=label_space,
        dim=dim,
        weights=weights,
        bias=bias,
        train_config=cfg,
        hidden_weights=hidden_w,
        hidden_bias=hidden_b,
        provenance=header.get("provenance", "cold"),
    )
