"""Pseudo-class-supervised embedding: one rectified hidden layer trained with
softmax cross-entropy, whose hidden activations become the photo features.

This is the desk-scale stand-in for fine-tuning a convolutional network on
pseudo-classes; imported deep features can bypass it entirely (passthrough).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericalError
from .features import FeatureSet, read_features, write_features
from .rng import generator


@dataclass
class EmbeddingModel:
    w1: np.ndarray  # (d_in, hidden)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden, n_classes)
    b2: np.ndarray  # (n_classes,)
    loss_trace: list[float] | None = None

    @property
    def d_in(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]

    @property
    def n_classes(self) -> int:
        return self.w2.shape[1]


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, (fan_in, fan_out))


def _forward(model: EmbeddingModel, x: np.ndarray):
    pre = x @ model.w1 + model.b1
    hidden = np.maximum(pre, 0.0)
    logits = hidden @ model.w2 + model.b2
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    return pre, hidden, probs


def softmax_probs(model: EmbeddingModel, x: np.ndarray) -> np.ndarray:
    """Class membership probabilities (rows sum to 1)."""
    return _forward(model, np.atleast_2d(np.asarray(x, dtype=np.float64)))[2]


def embed(model: EmbeddingModel, x: np.ndarray) -> np.ndarray:
    """Hidden-layer activations; deterministic and rectified (entries >= 0)."""
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[1] != model.d_in:
        raise DataError(
            f"feature dimension {arr.shape[1]} does not match model input {model.d_in}"
        )
    hidden = np.maximum(arr @ model.w1 + model.b1, 0.0)
    return hidden[0] if single else hidden


def loss_and_grads(model: EmbeddingModel, x: np.ndarray, y: np.ndarray):
    """Mean cross-entropy and its gradients for every parameter.

    Exposed so gradient-correctness tests can compare against finite
    differences.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    n = x.shape[0]
    pre, hidden, probs = _forward(model, x)
    eps = 1e-300  # guards log(0); never binds at trained scales
    loss = -float(np.log(probs[np.arange(n), y] + eps).mean())

    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    gw2 = hidden.T @ dlogits
    gb2 = dlogits.sum(axis=0)
    dhidden = dlogits @ model.w2.T
    dhidden[pre <= 0.0] = 0.0
    gw1 = x.T @ dhidden
    gb1 = dhidden.sum(axis=0)
    return loss, {"w1": gw1, "b1": gb1, "w2": gw2, "b2": gb2}


def train_embedding(
    features: np.ndarray,
    labels: np.ndarray,
    n_hidden: int,
    epochs: int,
    lr0: float,
    seed: int,
    batch_size: int = 32,
    n_classes: int | None = None,
) -> EmbeddingModel:
    """Mini-batch gradient descent on mean cross-entropy.

    The step decays as lr0 / (1 + t/epochs); the loss trace holds the
    full-set loss at epoch 0 (initialization) and after every epoch.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise DataError("features and labels are misaligned")
    if n_hidden < 1:
        raise DataError("hidden width must be >= 1")
    if n_classes is None:
        n_classes = int(y.max()) + 1 if y.size else 0
    if n_classes < 2:
        raise DataError("C >= 2 required: need at least two pseudo-classes")
    if y.min() < 0 or y.max() >= n_classes:
        raise DataError(
            f"label index {int(y.max())} outside [0, {n_classes})"
        )

    rng = generator(seed, "embed-init")
    d_in = x.shape[1]
    model = EmbeddingModel(
        w1=_glorot(rng, d_in, n_hidden),
        b1=np.zeros(n_hidden),
        w2=_glorot(rng, n_hidden, n_classes),
        b2=np.zeros(n_classes),
    )

    shuffle_rng = generator(seed, "embed-shuffle")
    n = x.shape[0]
    trace = [loss_and_grads(model, x, y)[0]]
    for t in range(epochs):
        lr = lr0 / (1.0 + t / epochs)
        order = shuffle_rng.permutation(n)
        for start in range(0, n, batch_size):
            batch = order[start : start + batch_size]
            _, grads = loss_and_grads(model, x[batch], y[batch])
            model.w1 -= lr * grads["w1"]
            model.b1 -= lr * grads["b1"]
            model.w2 -= lr * grads["w2"]
            model.b2 -= lr * grads["b2"]
        epoch_loss = loss_and_grads(model, x, y)[0]
        if not np.isfinite(epoch_loss):
            raise NumericalError(f"training loss diverged at epoch {t}")
        trace.append(epoch_loss)
    model.loss_trace = trace
    return model


def save_embedding(path, model: EmbeddingModel, config_hash: str | None = None) -> None:
    """JSON header line carrying (d_in, hidden, n_classes), then codec blocks."""
    with open(path, "wb") as fp:
        header = {"d_in": model.d_in, "hidden": model.hidden, "n_classes": model.n_classes}
        fp.write((json.dumps(header, sort_keys=True) + "\n").encode())
        write_features(fp, FeatureSet([f"w1r{i}" for i in range(model.d_in)], model.w1.astype(np.float32)))
        write_features(fp, FeatureSet(["b1"], model.b1[None, :].astype(np.float32)))
        write_features(fp, FeatureSet([f"w2r{i}" for i in range(model.hidden)], model.w2.astype(np.float32)))
        write_features(
            fp,
            FeatureSet(["b2"], model.b2[None, :].astype(np.float32)),
            config_hash=config_hash,
        )


def load_embedding(path) -> EmbeddingModel:
    with open(path, "rb") as fp:
        header = json.loads(fp.readline().decode())
        w1 = read_features(fp).values.astype(np.float64)
        b1 = read_features(fp).values[0].astype(np.float64)
        w2 = read_features(fp).values.astype(np.float64)
        b2 = read_features(fp).values[0].astype(np.float64)
    model = EmbeddingModel(w1=w1, b1=b1, w2=w2, b2=b2)
    if (model.d_in, model.hidden, model.n_classes) != (
        header["d_in"], header["hidden"], header["n_classes"]
    ):
        raise DataError("embedding header disagrees with matrix shapes")
    return model
