"""Multilayer perceptron over a flat parameter vector, with analytic gradients.

All weights live in one float64 vector whose layout is fixed by the layer
sizes (row-major weight matrix, then bias, per layer). Aggregation, SGD and
gradient projection then reduce to plain vector arithmetic. Everything here
is a pure function: same inputs give bit-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

ACTIVATIONS = ("relu", "tanh")


class LayoutError(ValueError):
    """Vector length does not match the layout implied by the model spec."""


@dataclass(frozen=True)
class ModelSpec:
    """Layer sizes (input dim, hidden dims..., class count) and hidden activation."""

    layer_sizes: tuple
    activation: str = "relu"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise ValueError("model needs at least an input and an output layer")
        if any(s < 1 for s in sizes):
            raise ValueError("every layer size must be >= 1")
        if sizes[-1] < 2:
            raise ValueError("classifier needs at least 2 output classes")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_classes(self) -> int:
        return self.layer_sizes[-1]

    def layer_shapes(self) -> list:
        """(fan_in, fan_out) per layer."""
        sizes = self.layer_sizes
        return [(sizes[i], sizes[i + 1]) for i in range(len(sizes) - 1)]

    @property
    def n_params(self) -> int:
        return sum(fi * fo + fo for fi, fo in self.layer_shapes())


@dataclass
class Batch:
    """A labeled minibatch; ``logits`` carries stored teacher outputs for replay."""

    inputs: np.ndarray
    labels: np.ndarray
    logits: Optional[np.ndarray] = None

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 2:
            raise ValueError("batch inputs must be a 2-D matrix")
        if self.labels.shape != (self.inputs.shape[0],):
            raise ValueError("batch labels must align with input rows")
        if self.logits is not None:
            self.logits = np.asarray(self.logits, dtype=np.float64)
            if self.logits.shape[0] != self.inputs.shape[0]:
                raise ValueError("batch logits must align with input rows")

    def __len__(self) -> int:
        return self.inputs.shape[0]


def _split(spec: ModelSpec, vector: np.ndarray) -> list:
    """Views of (W, b) per layer into the flat vector."""
    vector = np.asarray(vector, dtype=np.float64)
    if vector.shape != (spec.n_params,):
        raise LayoutError(
            f"expected vector of length {spec.n_params}, got shape {vector.shape}"
        )
    out = []
    pos = 0
    for fan_in, fan_out in spec.layer_shapes():
        w = vector[pos : pos + fan_in * fan_out].reshape(fan_in, fan_out)
        pos += fan_in * fan_out
        b = vector[pos : pos + fan_out]
        pos += fan_out
        out.append((w, b))
    return out


def init_params(spec: ModelSpec, seed) -> np.ndarray:
    """Glorot-uniform weights, zero biases, deterministic for a fixed seed."""
    rng = np.random.default_rng(seed)
    params = np.zeros(spec.n_params, dtype=np.float64)
    layers = _split(spec, params)
    for w, _b in layers:
        fan_in, fan_out = w.shape
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w[...] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
    return params


def _forward_cached(spec: ModelSpec, params: np.ndarray, inputs: np.ndarray):
    """Logits plus per-layer post-activation inputs, for backprop."""
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim == 1:
        inputs = inputs[None, :]
    if inputs.shape[1] != spec.input_dim:
        raise LayoutError(
            f"expected inputs with {spec.input_dim} columns, got {inputs.shape[1]}"
        )
    layers = _split(spec, params)
    acts = [inputs]
    a = inputs
    for w, b in layers[:-1]:
        pre = a @ w + b
        a = np.maximum(pre, 0.0) if spec.activation == "relu" else np.tanh(pre)
        acts.append(a)
    w, b = layers[-1]
    logits = acts[-1] @ w + b
    return logits, acts


def forward(spec: ModelSpec, params: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    """Pre-softmax logits, one row per input row."""
    logits, _ = _forward_cached(spec, params, inputs)
    return logits


def backward(
    spec: ModelSpec, params: np.ndarray, inputs: np.ndarray, dlogits: np.ndarray
) -> np.ndarray:
    """Gradient of a scalar objective with the given d(objective)/d(logits)."""
    _, acts = _forward_cached(spec, params, inputs)
    layers = _split(spec, params)
    grad = np.zeros_like(params)
    gl = _split(spec, grad)
    delta = np.asarray(dlogits, dtype=np.float64)
    for li in range(len(layers) - 1, -1, -1):
        w, _b = layers[li]
        gw, gb = gl[li]
        gw += acts[li].T @ delta
        gb += delta.sum(axis=0)
        if li == 0:
            break
        delta = delta @ w.T
        a = acts[li]
        if spec.activation == "relu":
            delta = delta * (a > 0.0)
        else:
            delta = delta * (1.0 - a * a)
    return grad


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grad(spec: ModelSpec, params: np.ndarray, batch: Batch):
    """Mean softmax cross-entropy over the batch and its exact gradient."""
    if len(batch) == 0:
        raise ValueError("loss_and_grad requires a nonempty batch")
    n = len(batch)
    logits, _ = _forward_cached(spec, params, batch.inputs)
    if np.any(batch.labels < 0) or np.any(batch.labels >= spec.n_classes):
        raise ValueError("batch labels out of range for this model")
    z = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(logsumexp - z[np.arange(n), batch.labels]))
    probs = softmax(logits)
    probs[np.arange(n), batch.labels] -= 1.0
    grad = backward(spec, params, batch.inputs, probs / n)
    return loss, grad


def finite_diff_grad(
    spec: ModelSpec, params: np.ndarray, batch: Batch, eps: float = 1e-4
) -> np.ndarray:
    """Central-difference gradient; the independent oracle for loss_and_grad."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    params = np.asarray(params, dtype=np.float64)
    grad = np.zeros_like(params)
    for i in range(params.size):
        bumped = params.copy()
        bumped[i] += eps
        hi, _ = _loss_only(spec, bumped, batch)
        bumped[i] -= 2 * eps
        lo, _ = _loss_only(spec, bumped, batch)
        grad[i] = (hi - lo) / (2 * eps)
    return grad


def _loss_only(spec: ModelSpec, params: np.ndarray, batch: Batch):
    n = len(batch)
    logits, _ = _forward_cached(spec, params, batch.inputs)
    z = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1))
    return float(np.mean(logsumexp - z[np.arange(n), batch.labels])), logits


def sgd_step(params: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
    """One plain gradient-descent step."""
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != grad.shape:
        raise LayoutError("parameter and gradient layouts differ")
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    return params - lr * grad


def predict(
    spec: ModelSpec,
    params: np.ndarray,
    inputs: np.ndarray,
    class_mask=None,
) -> np.ndarray:
    """Argmax labels; a class mask restricts the argmax (ties to lowest index)."""
    logits = forward(spec, params, inputs)
    if class_mask is None:
        return np.argmax(logits, axis=1)
    mask = sorted(int(c) for c in class_mask)
    if not mask:
        raise ValueError("class mask must not be empty")
    if mask[0] < 0 or mask[-1] >= spec.n_classes:
        raise ValueError("class mask outside [0, n_classes)")
    cols = np.array(mask, dtype=np.int64)
    # np.argmax picks the first maximum, which is the lowest class index here
    local = np.argmax(logits[:, cols], axis=1)
    return cols[local]
