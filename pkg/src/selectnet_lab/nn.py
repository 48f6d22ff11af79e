"""Dense feed-forward networks with hand-written backprop and SGD.

Arrays are float64 numpy matrices, one sample per row. The same ``MlpModel``
serves as the classifier (softmax head) and as the selection network
(single sigmoid output).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, InputError, UsageError

ACTIVATIONS = ("relu", "sigmoid", "softmax", "identity")
PROB_FLOOR = 1e-12

Gradients = List[Tuple[np.ndarray, np.ndarray]]


def relu(x):
    return np.maximum(x, 0.0)


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x):
    shifted = x - x.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=1, keepdims=True)


def _activate(name, z):
    if name == "relu":
        return relu(z)
    if name == "sigmoid":
        return sigmoid(z)
    if name == "softmax":
        return softmax(z)
    return z


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "identity"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ConfigError(
                f"bias of shape {self.bias.shape} does not match weights {self.weights.shape}"
            )
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass
class MlpModel:
    layers: List[DenseLayer]
    seed: int = 0
    # bumped on every parameter update so stale caches can be detected
    version: int = field(default=0, compare=False)

    def __post_init__(self):
        if not self.layers:
            raise ConfigError("an MLP needs at least one layer")
        for k, (a, b) in enumerate(zip(self.layers, self.layers[1:])):
            if a.out_dim != b.in_dim:
                raise ConfigError(
                    f"layer {k} outputs {a.out_dim} values but layer {k + 1} expects {b.in_dim}"
                )
        for layer in self.layers[:-1]:
            if layer.activation == "softmax":
                raise ConfigError("softmax is only allowed on the final layer")

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def num_parameters(self) -> int:
        return sum(layer.weights.size + layer.bias.size for layer in self.layers)

    def copy(self) -> "MlpModel":
        layers = [DenseLayer(l.weights.copy(), l.bias.copy(), l.activation) for l in self.layers]
        return MlpModel(layers, self.seed, self.version)

    def parameters(self) -> List[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend((layer.weights, layer.bias))
        return out

    def predict(self, x) -> np.ndarray:
        return forward(self, x)[0]


def init_mlp(
    sizes: Sequence[int],
    seed: int,
    hidden_activation: str = "relu",
    output_activation: str = "softmax",
) -> MlpModel:
    """Glorot-uniform weights and zero biases, deterministic in ``seed``."""
    if len(sizes) < 2:
        raise ConfigError("sizes must list the input width and at least one layer width")
    rng = np.random.default_rng(seed)
    layers = []
    for k, (n_in, n_out) in enumerate(zip(sizes, sizes[1:])):
        limit = np.sqrt(6.0 / (n_in + n_out))
        act = output_activation if k == len(sizes) - 2 else hidden_activation
        layers.append(
            DenseLayer(rng.uniform(-limit, limit, size=(n_out, n_in)), np.zeros(n_out), act)
        )
    return MlpModel(layers, seed)


@dataclass
class ForwardCache:
    inputs: List[np.ndarray]  # input to each layer
    outputs: List[np.ndarray]  # activation output of each layer
    model_id: int
    version: int


def forward(model: MlpModel, batch) -> Tuple[np.ndarray, ForwardCache]:
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.in_dim:
        raise ConfigError(f"batch has shape {x.shape}, model expects {model.in_dim} columns")
    inputs, outputs = [], []
    for layer in model.layers:
        inputs.append(x)
        x = _activate(layer.activation, x @ layer.weights.T + layer.bias)
        outputs.append(x)
    return x, ForwardCache(inputs, outputs, id(model), model.version)


def backward(
    model: MlpModel, cache: ForwardCache, loss_grad, *, wrt_logits: bool = False
) -> Gradients:
    """Gradients of a scalar loss for every (weights, bias) pair.

    ``loss_grad`` is dL/d(output). With ``wrt_logits=True`` it is instead
    taken as dL/d(pre-activation) of the last layer, which is how the fused
    softmax-cross-entropy gradient ``probs - onehot`` is fed in.
    """
    if cache.model_id != id(model) or cache.version != model.version:
        raise UsageError("forward cache does not belong to the current model parameters")
    g = np.asarray(loss_grad, dtype=np.float64)
    if g.shape != cache.outputs[-1].shape:
        raise UsageError(f"loss gradient shape {g.shape} != output shape {cache.outputs[-1].shape}")
    grads: Gradients = [None] * len(model.layers)  # type: ignore[list-item]
    for k in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[k]
        y = cache.outputs[k]
        if not (wrt_logits and k == len(model.layers) - 1):
            if layer.activation == "relu":
                g = g * (y > 0)
            elif layer.activation == "sigmoid":
                g = g * y * (1.0 - y)
            elif layer.activation == "softmax":
                g = y * (g - np.sum(g * y, axis=1, keepdims=True))
        grads[k] = (g.T @ cache.inputs[k], g.sum(axis=0))
        if k:
            g = g @ layer.weights
    return grads


def one_hot(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, num_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def cross_entropy_loss(probs, labels) -> Tuple[np.ndarray, float]:
    """Per-sample ``-log p(true class)`` (floored at 1e-12) and its mean."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if probs.shape != labels.shape:
        raise InputError(f"probs {probs.shape} and labels {labels.shape} differ in shape")
    if not (np.all((labels == 0) | (labels == 1)) and np.all(labels.sum(axis=1) == 1)):
        raise InputError("labels must be one-hot rows")
    p_true = np.sum(probs * labels, axis=1)
    losses = -np.log(np.maximum(p_true, PROB_FLOOR))
    return losses, float(losses.mean()) if losses.size else 0.0


def label_losses(probs, labels) -> np.ndarray:
    """Cross-entropy against integer class ids; same floor as ``cross_entropy_loss``."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    return -np.log(np.maximum(probs[np.arange(labels.size), labels], PROB_FLOOR))


def weighted_mean_loss(per_sample_losses, weights) -> float:
    """Sum of ``w_i * L_i`` over the number of nonzero weights (0 if none)."""
    losses = np.asarray(per_sample_losses, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if losses.shape != w.shape:
        raise InputError("losses and weights must have equal length")
    if np.any(w < 0):
        raise InputError("weights must be non-negative")
    return float(np.sum(w * losses) / max(1, int(np.count_nonzero(w))))


@dataclass
class SgdConfig:
    learning_rate: float = 0.05
    momentum: float = 0.9
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum must lie in [0, 1)")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")


class SGD:
    """SGD with an optional heavy-ball momentum buffer ``v <- mu*v + g``."""

    def __init__(self, config: SgdConfig):
        self.config = config
        self.velocity: Optional[Gradients] = None

    def step(self, model: MlpModel, grads: Gradients) -> MlpModel:
        if len(grads) != len(model.layers):
            raise UsageError("gradient list does not match the model's layers")
        for layer, (gw, gb) in zip(model.layers, grads):
            if gw.shape != layer.weights.shape or gb.shape != layer.bias.shape:
                raise UsageError("gradient shape does not match parameter shape")
        lr, mu = self.config.learning_rate, self.config.momentum
        if mu > 0:
            if self.velocity is None:
                self.velocity = [(np.zeros_like(gw), np.zeros_like(gb)) for gw, gb in grads]
            self.velocity = [
                (mu * vw + gw, mu * vb + gb) for (vw, vb), (gw, gb) in zip(self.velocity, grads)
            ]
            grads = self.velocity
        for layer, (gw, gb) in zip(model.layers, grads):
            layer.weights -= lr * gw
            layer.bias -= lr * gb
        model.version += 1
        return model


def sgd_step(model: MlpModel, grads: Gradients, config: SgdConfig, optimizer: Optional[SGD] = None):
    """One update; pass the same ``optimizer`` across calls to keep momentum."""
    return (optimizer or SGD(config)).step(model, grads)
