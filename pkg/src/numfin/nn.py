"""Minimal differentiable layers, Adam, and a training loop.

Only what the convolutional classifier needs: valid (no padding) 1-D
convolution, global max pooling, a dense layer, ReLU, inverted dropout,
softmax cross-entropy, Adam with bias correction, and minibatch training
with validation-loss early stopping. Everything is float64 numpy;
gradients are exact and checked against central finite differences in
the test suite.

Array layout: a sample is (L, C) with time on the first axis; all ops
also accept a leading batch axis (B, L, C).
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field, asdict
from typing import Optional, Protocol

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 20
    val_fraction: float = 0.10
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must be in (0, 1)")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


# --- layers -------------------------------------------------------------


def conv1d_forward(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Valid 1-D convolution: x (..., L, C), kernels (K, w, C) -> (..., L-w+1, K)."""
    k, w, c = kernels.shape
    if x.shape[-1] != c:
        raise ValueError(f"channel mismatch: input {x.shape[-1]}, kernels {c}")
    if x.shape[-2] < w:
        raise ValueError(f"input length {x.shape[-2]} shorter than kernel width {w}")
    windows = sliding_window_view(x, w, axis=-2)  # (..., L-w+1, C, w)
    return np.einsum("...cw,kwc->...k", windows, kernels, optimize=True) + bias


def conv1d_backward(
    x: np.ndarray, kernels: np.ndarray, dout: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    k, w, c = kernels.shape
    l_out = x.shape[-2] - w + 1
    dbias = dout.reshape(-1, k).sum(axis=0)
    dkernels = np.empty_like(kernels)
    dx = np.zeros_like(x)
    for i in range(w):
        xi = x[..., i : i + l_out, :]
        dkernels[:, i, :] = np.einsum("...k,...c->kc", dout, xi, optimize=True)
        dx[..., i : i + l_out, :] += dout @ kernels[:, i, :]
    return dx, dkernels, dbias


def global_maxpool_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column-wise max over the time axis; returns (out, argmax) with the
    first maximal row winning ties."""
    if x.shape[-2] == 0:
        raise ValueError("cannot pool an empty sequence")
    argmax = x.argmax(axis=-2)
    out = np.take_along_axis(x, argmax[..., None, :], axis=-2).squeeze(-2)
    return out, argmax


def global_maxpool_backward(x: np.ndarray, argmax: np.ndarray, dout: np.ndarray) -> np.ndarray:
    dx = np.zeros_like(x)
    np.put_along_axis(dx, argmax[..., None, :], dout[..., None, :], axis=-2)
    return dx


def dense_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """x (..., n), weight (m, n), bias (m,) -> (..., m)."""
    return x @ weight.T + bias


def dense_backward(
    x: np.ndarray, weight: np.ndarray, dout: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    dx = dout @ weight
    dweight = np.einsum("...m,...n->mn", dout, x, optimize=True)
    dbias = dout.reshape(-1, weight.shape[0]).sum(axis=0)
    return dx, dweight, dbias


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, dout: np.ndarray) -> np.ndarray:
    return dout * (x > 0.0)


def dropout_forward(
    x: np.ndarray, p: float, rng: Optional[np.random.Generator], train: bool
) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """Inverted dropout: survivors scaled by 1/(1-p) at train time so
    inference is a plain forward pass."""
    if not 0.0 <= p < 1.0:
        raise ValueError("dropout rate must be in [0, 1)")
    if not train or p == 0.0:
        return x, None
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return x * mask, mask


def dropout_backward(dout: np.ndarray, mask: Optional[np.ndarray]) -> np.ndarray:
    return dout if mask is None else dout * mask


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_crossentropy(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean cross-entropy loss and its gradient w.r.t. the logits.

    Accepts a single sample (C,) with an integer label or a batch (B, C)
    with labels (B,). The returned gradient is for the mean loss.
    """
    single = logits.ndim == 1
    logits2 = logits[None, :] if single else logits
    labels2 = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    probs = softmax(logits2)
    n = logits2.shape[0]
    picked = probs[np.arange(n), labels2]
    loss = float(-np.log(np.maximum(picked, 1e-300)).mean())
    dlogits = probs.copy()
    dlogits[np.arange(n), labels2] -= 1.0
    dlogits /= n
    return loss, (dlogits[0] if single else dlogits)


# --- optimizer ----------------------------------------------------------


class Adam:
    """Adam with bias correction; state is kept per parameter name."""

    def __init__(self, learning_rate=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    @classmethod
    def from_config(cls, config: TrainConfig) -> "Adam":
        return cls(config.learning_rate, config.beta1, config.beta2, config.epsilon)

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, g in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(params[name])
                self.v[name] = np.zeros_like(params[name])
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[name] / bc1
            v_hat = self.v[name] / bc2
            params[name] -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)


def adam_step(
    params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: Adam
) -> None:
    """Functional alias: apply one Adam update in place."""
    state.step(params, grads)


# --- training loop ------------------------------------------------------


class TrainableModel(Protocol):
    params: dict[str, np.ndarray]

    def loss_and_grads(
        self, xb: np.ndarray, yb: np.ndarray, rng: np.random.Generator
    ) -> tuple[float, dict[str, np.ndarray]]: ...

    def batch_loss(self, xb: np.ndarray, yb: np.ndarray) -> float: ...


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1
    stopped_epoch: int = -1


def stratified_split(
    labels: np.ndarray, fraction: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Indices (train, held_out) with roughly `fraction` of each class held
    out; classes with a single sample stay in the training part."""
    labels = np.asarray(labels)
    train_idx: list[int] = []
    val_idx: list[int] = []
    for cls in sorted(set(labels.tolist())):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(len(idx))]
        n_val = max(1, round(fraction * len(idx))) if len(idx) >= 2 else 0
        val_idx.extend(idx[:n_val])
        train_idx.extend(idx[n_val:])
    return np.sort(np.array(train_idx, dtype=np.int64)), np.sort(np.array(val_idx, dtype=np.int64))


def train(
    model: TrainableModel, inputs: np.ndarray, labels: np.ndarray, config: TrainConfig
) -> TrainHistory:
    """Minibatch Adam on cross entropy with early stopping.

    Splits off a stratified validation set, stops after `patience` epochs
    without a new best validation loss, and restores the best weights.
    Bit-reproducible for a fixed config seed.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if len(set(labels.tolist())) < 2:
        raise ValueError("training data contains a single class")
    rng = np.random.default_rng(config.seed)
    train_idx, val_idx = stratified_split(labels, config.val_fraction, rng)
    x_train, y_train = inputs[train_idx], labels[train_idx]
    x_val, y_val = inputs[val_idx], labels[val_idx]

    optimizer = Adam.from_config(config)
    history = TrainHistory()
    best_params = copy.deepcopy(model.params)
    best_val = np.inf
    bad_epochs = 0
    for epoch in range(config.max_epochs):
        order = rng.permutation(len(x_train))
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            loss, grads = model.loss_and_grads(x_train[batch], y_train[batch], rng)
            optimizer.step(model.params, grads)
            epoch_loss += loss * len(batch)
        history.train_loss.append(epoch_loss / len(order))
        val_loss = model.batch_loss(x_val, y_val) if len(x_val) else history.train_loss[-1]
        history.val_loss.append(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            best_params = copy.deepcopy(model.params)
            history.best_epoch = epoch
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= config.patience:
                break
    history.stopped_epoch = len(history.train_loss) - 1
    model.params.update(best_params)
    return history


# --- checkpoints --------------------------------------------------------


def save_checkpoint(path, params: dict[str, np.ndarray], metadata: Optional[dict] = None) -> None:
    """Write parameters (and a JSON metadata blob) to an .npz container;
    round-trips are bit-exact."""
    arrays = dict(params)
    arrays["__metadata__"] = np.frombuffer(
        json.dumps(metadata or {}, sort_keys=True).encode("utf-8"), dtype=np.uint8
    )
    np.savez(path, **arrays)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    with np.load(path) as data:
        metadata = json.loads(bytes(data["__metadata__"]).decode("utf-8"))
        params = {k: data[k].copy() for k in data.files if k != "__metadata__"}
    return params, metadata
