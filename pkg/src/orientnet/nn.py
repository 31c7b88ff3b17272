"""Forward/backward passes over a ``NetworkConfig``, losses and SGD training.

Parameters live in a plain ``dict`` mapping names such as ``conv0.weight`` to
arrays, in the order given by :meth:`NetworkConfig.param_shapes`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .config import NetworkConfig
from .errors import ConfigMismatchError, ShapeError, ValidationError
from .tensor import (
    DTYPE,
    conv2d_backward,
    conv2d_forward,
    col2im,
    matmul,
    maxpool2x2_backward,
    maxpool2x2_forward,
)

RELU_STANDARD = "standard"
RELU_GUIDED = "guided"


@dataclass
class ForwardCache:
    """Per-layer inputs and outputs, plus whatever each layer needs for backward."""

    inputs: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    aux: list = field(default_factory=list)


def dropout_forward(x, drop_rate: float, rng: np.random.Generator | None, mode: str = "train"):
    """Inverted dropout. Returns ``(output, keep_mask)``."""
    if not 0.0 <= drop_rate < 1.0:
        raise ValidationError(f"drop rate must lie in [0, 1), got {drop_rate}")
    if mode != "train" or drop_rate == 0.0:
        return x, np.ones(x.shape, dtype=bool)
    if rng is None:
        raise ValidationError("train-mode dropout needs an rng")
    keep = rng.random(x.shape) >= drop_rate
    scale = x.dtype.type(1.0 / (1.0 - drop_rate))
    return x * keep * scale, keep


def dropout_backward(grad, keep, drop_rate: float):
    if drop_rate == 0.0:
        return grad * keep
    return grad * keep * grad.dtype.type(1.0 / (1.0 - drop_rate))


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy_loss(logits, labels):
    """Mean softmax cross-entropy; returns ``(loss, grad_logits)``."""
    logits = np.asarray(logits)
    labels = np.asarray(labels, dtype=np.int64)
    n, c = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} does not match logits {logits.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ValidationError(f"labels must lie in 0..{c - 1}")
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(lse - z[rows, labels]))
    grad = softmax(logits)
    grad[rows, labels] -= 1
    grad /= n
    return loss, grad


def forward(config: NetworkConfig, params: dict, x, mode: str = "eval",
            rng: np.random.Generator | None = None, dropout: float | None = None):
    """Run the network on a batch ``x`` of shape ``(N, *input_shape)``.

    ``dropout`` overrides every dropout layer's rate (train mode only).
    Returns ``(logits, cache)``.
    """
    if mode not in ("train", "eval"):
        raise ValidationError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = np.asarray(x)
    if x.shape[1:] != config.input_shape:
        raise ShapeError(f"input batch {x.shape} does not match network input {config.input_shape}")
    cache = ForwardCache()
    h = x
    for i, layer in enumerate(config.layers):
        cache.inputs.append(h)
        aux = None
        k = layer.kind
        if k == "conv":
            w, b = (params[n] for n in config.param_names(i))
            h = conv2d_forward(h, w, b, layer.geometry)
        elif k == "dense":
            w, b = (params[n] for n in config.param_names(i))
            h = matmul(h, w.T)
            h += b
        elif k == "relu":
            h = np.maximum(h, 0)
        elif k == "maxpool":
            h, aux = maxpool2x2_forward(h)
        elif k == "flatten":
            h = h.reshape(h.shape[0], -1)
        elif k == "dropout":
            rate = layer.rate if dropout is None else dropout
            h, keep = dropout_forward(h, rate, rng, mode)
            aux = (keep, rate if mode == "train" else 0.0)
        elif k == "softmax":
            h = softmax(h)
        cache.outputs.append(h)
        cache.aux.append(aux)
    return h, cache


def backward(config: NetworkConfig, params: dict, cache: ForwardCache, grad_out,
             relu_mode: str = RELU_STANDARD, param_grads: bool = True,
             relu_hook: Callable[[int, np.ndarray], None] | None = None):
    """Backpropagate ``grad_out`` (gradient w.r.t. the network output).

    With ``relu_mode="guided"`` each ReLU also zeroes negative incoming
    gradients, on top of the usual gate on inactive units. ``relu_hook`` is
    called with ``(layer_index, gradient)`` right after every ReLU gate.
    Returns ``(grad_input, grads)``.
    """
    if relu_mode not in (RELU_STANDARD, RELU_GUIDED):
        raise ValidationError(f"unknown relu mode {relu_mode!r}")
    grads = {}
    g = grad_out
    for i in range(len(config.layers) - 1, -1, -1):
        layer = config.layers[i]
        x = cache.inputs[i]
        k = layer.kind
        if k == "conv":
            names = config.param_names(i)
            w = params[names[0]]
            if param_grads:
                g, gw, gb = conv2d_backward(g, x, w, layer.geometry)
                grads[names[0]], grads[names[1]] = gw, gb
            else:
                f = layer.geometry.out_channels
                g2 = g.transpose(0, 2, 3, 1).reshape(-1, f)
                g = col2im(matmul(g2, w.reshape(f, -1)), x.shape, layer.geometry)
        elif k == "dense":
            names = config.param_names(i)
            w = params[names[0]]
            if param_grads:
                grads[names[0]] = matmul(g.T, x)
                grads[names[1]] = g.sum(axis=0)
            g = matmul(g, w)
        elif k == "relu":
            gate = cache.outputs[i] > 0
            if relu_mode == RELU_GUIDED:
                gate &= g > 0
            g = g * gate
            if relu_hook is not None:
                relu_hook(i, g)
        elif k == "maxpool":
            g = maxpool2x2_backward(g, cache.aux[i])
        elif k == "flatten":
            g = g.reshape(x.shape)
        elif k == "dropout":
            keep, rate = cache.aux[i]
            g = dropout_backward(g, keep, rate)
        elif k == "softmax":
            y = cache.outputs[i]
            g = y * (g - (g * y).sum(axis=-1, keepdims=True))
    return g, grads


def init_params(config: NetworkConfig, source="fresh", rng: np.random.Generator | None = None) -> dict:
    """Build a parameter dict.

    ``source`` is ``"fresh"`` (He-normal weights, zero biases), ``"zeros"``,
    a checkpoint path, or a loaded :class:`~orientnet.checkpoint.Checkpoint`.
    A checkpoint may differ from ``config`` only in the output width of the
    final dense layer; that head is then initialised fresh.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    if isinstance(source, str) and source in ("fresh", "zeros"):
        return _fresh_params(config, rng, zeros=source == "zeros")
    from .checkpoint import Checkpoint, load_checkpoint

    ckpt = source if isinstance(source, Checkpoint) else load_checkpoint(Path(source))
    head = _check_transfer(ckpt.config, config)
    params = {}
    for i, layer in enumerate(config.layers):
        names = config.param_names(i)
        if not names:
            continue
        if i == head and ckpt.config.layers[i] != layer:
            params.update(_fresh_layer(config, i, rng))
            continue
        for (name, shape) in zip(names, (s for _, s in layer.param_shapes())):
            t = ckpt.tensors[name]
            if t.shape != shape:
                raise ConfigMismatchError(f"tensor {name}: checkpoint shape {t.shape}, network expects {shape}")
            params[name] = t.astype(DTYPE, copy=True)
    return params


def _check_transfer(src: NetworkConfig, dst: NetworkConfig) -> int:
    if src.input_shape != dst.input_shape:
        raise ConfigMismatchError(f"input shape: checkpoint {src.input_shape}, network {dst.input_shape}")
    if len(src.layers) != len(dst.layers):
        raise ConfigMismatchError(f"layer count: checkpoint {len(src.layers)}, network {len(dst.layers)}")
    head = dst.head_index()
    for i, (a, b) in enumerate(zip(src.layers, dst.layers)):
        if a == b:
            continue
        if i == head and a.kind == b.kind == "dense" and a.in_features == b.in_features:
            continue
        raise ConfigMismatchError(f"layer {i}: checkpoint {a.to_dict()} vs network {b.to_dict()}")
    return head


def _fresh_layer(config, i, rng, zeros=False):
    layer = config.layers[i]
    out = {}
    if not layer.param_shapes():
        return out
    std = np.sqrt(2.0 / layer.fan_in())
    for name, (p, shape) in zip(config.param_names(i), layer.param_shapes()):
        if p == "weight" and not zeros:
            out[name] = rng.normal(0.0, std, size=shape).astype(DTYPE)
        else:
            out[name] = np.zeros(shape, dtype=DTYPE)
    return out


def _fresh_params(config, rng, zeros=False):
    params = {}
    for i in range(len(config.layers)):
        params.update(_fresh_layer(config, i, rng, zeros))
    return params


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    momentum: float = 0.9
    batch_size: int = 32
    epochs: int = 15
    dropout: float = 0.7
    seed: int = 0
    init: str = "fresh"

    def __post_init__(self):
        if not self.lr >= 0:
            raise ValidationError(f"learning rate must be >= 0, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValidationError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValidationError("batch size and epochs must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValidationError(f"dropout must lie in [0, 1), got {self.dropout}")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")


class SGDMomentum:
    """``v <- momentum*v - lr*g; w <- w + v``, updating ``params`` in place."""

    def __init__(self, lr: float, momentum: float = 0.9):
        self.lr = lr
        self.momentum = momentum
        self.velocity: dict = {}

    def step(self, params: dict, grads: dict) -> None:
        for name, g in grads.items():
            w = params[name]
            lr = w.dtype.type(self.lr)
            mu = w.dtype.type(self.momentum)
            v = self.velocity.get(name)
            v = -(lr * g) if v is None else mu * v - lr * g
            self.velocity[name] = v
            w += v


@dataclass
class EpochStats:
    loss: float
    accuracy: float
    n: int


def train_epoch(config: NetworkConfig, params: dict, dataset, train_config: TrainConfig,
                rng: np.random.Generator, optimizer: SGDMomentum | None = None) -> EpochStats:
    """One pass of minibatch SGD over ``dataset = (images, labels)``."""
    images, labels = dataset
    labels = np.asarray(labels, dtype=np.int64)
    n = len(labels)
    if n == 0:
        raise ValidationError("cannot train on an empty dataset")
    if train_config.batch_size > n:
        raise ValidationError(f"batch size {train_config.batch_size} exceeds dataset size {n}")
    if optimizer is None:
        optimizer = SGDMomentum(train_config.lr, train_config.momentum)
    order = rng.permutation(n)
    total_loss = 0.0
    correct = 0
    for start in range(0, n, train_config.batch_size):
        idx = order[start:start + train_config.batch_size]
        logits, cache = forward(config, params, images[idx], "train", rng, train_config.dropout)
        loss, grad = cross_entropy_loss(logits, labels[idx])
        _, grads = backward(config, params, cache, grad)
        optimizer.step(params, grads)
        total_loss += loss * len(idx)
        correct += int((logits.argmax(axis=1) == labels[idx]).sum())
    return EpochStats(total_loss / n, correct / n, n)


def predict_logits(config: NetworkConfig, params: dict, images, batch_size: int = 64):
    out = []
    for start in range(0, len(images), batch_size):
        logits, _ = forward(config, params, images[start:start + batch_size], "eval")
        out.append(logits)
    return np.concatenate(out, axis=0)


def evaluate_loss(config: NetworkConfig, params: dict, dataset) -> tuple[float, float]:
    """Eval-mode ``(mean loss, accuracy)`` over ``dataset = (images, labels)``."""
    images, labels = dataset
    logits = predict_logits(config, params, images)
    loss, _ = cross_entropy_loss(logits, labels)
    return loss, float((logits.argmax(axis=1) == np.asarray(labels)).mean())


def fit(config: NetworkConfig, params: dict, train_data, train_config: TrainConfig,
        rng: np.random.Generator, val_data=None, on_epoch: Callable | None = None) -> list[dict]:
    """Train for ``train_config.epochs`` epochs; momentum state persists across epochs."""
    optimizer = SGDMomentum(train_config.lr, train_config.momentum)
    history = []
    for epoch in range(1, train_config.epochs + 1):
        stats = train_epoch(config, params, train_data, train_config, rng, optimizer)
        row = {"epoch": epoch, "loss": stats.loss, "train_acc": stats.accuracy}
        if val_data is not None:
            row["val_acc"] = evaluate_loss(config, params, val_data)[1]
        history.append(row)
        if on_epoch is not None:
            on_epoch(row)
    return history
