"""Dense feed-forward network core: layers, activations, backprop, RMSprop.

Conventions used throughout (all callers rely on them):

* batches are row-major: an input batch has shape ``(batch, in_dim)``;
* a layer's weight matrix has shape ``(out_dim, in_dim)`` and its bias
  ``(out_dim,)``, so the affine map is ``z = x @ W.T + b``;
* all parameters and activations are float64.

The loss attached to a softmax output layer is categorical cross-entropy,
averaged over the batch, with the probability floored at ``PROB_FLOOR``
inside the log.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SIGMOID = "sigmoid"
SOFTMAX = "softmax"
IDENTITY = "identity"
ACTIVATIONS = (SIGMOID, SOFTMAX, IDENTITY)

PROB_FLOOR = 1e-12


@dataclass
class DenseLayer:
    """One fully-connected layer: weights (out_dim, in_dim), bias (out_dim,)."""

    weights: np.ndarray
    biases: np.ndarray
    activation: str = SIGMOID

    def __post_init__(self) -> None:
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}; expected one of {ACTIVATIONS}")
        if self.weights.ndim != 2:
            raise ValueError(f"weights must be 2-D, got shape {self.weights.shape}")
        if self.biases.shape != (self.weights.shape[0],):
            raise ValueError(
                f"bias shape {self.biases.shape} does not match out_dim {self.weights.shape[0]}"
            )

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.weights.copy(), self.biases.copy(), self.activation)


@dataclass
class ForwardTrace:
    """Per-layer pre-activations and activations retained for backprop."""

    inputs: np.ndarray
    pre_activations: list[np.ndarray] = field(default_factory=list)
    activations: list[np.ndarray] = field(default_factory=list)

    @property
    def output(self) -> np.ndarray:
        return self.activations[-1]


def glorot_init(in_dim: int, out_dim: int, rng: np.random.Generator,
                activation: str = SIGMOID) -> DenseLayer:
    """Glorot-uniform layer: weights in +-sqrt(6/(in_dim+out_dim)), biases 0.

    Deterministic for a fixed generator state: the same seeded ``rng``
    yields a bitwise-identical layer.
    """
    if in_dim < 1 or out_dim < 1:
        raise ValueError(f"layer dimensions must be >= 1, got in_dim={in_dim}, out_dim={out_dim}")
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    weights = rng.uniform(-limit, limit, size=(out_dim, in_dim))
    biases = np.zeros(out_dim)
    return DenseLayer(weights, biases, activation)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Elementwise 1/(1+exp(-x)), stable for large |x| (no overflow)."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max-subtraction; rows sum to 1.

    Accepts a vector or a (batch, classes) matrix and preserves the shape.
    """
    logits = np.asarray(logits, dtype=float)
    if logits.size == 0:
        raise ValueError("softmax of an empty vector is undefined")
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def cross_entropy(probs: np.ndarray, gold: int) -> float:
    """-ln(probs[gold]) with the probability floored at PROB_FLOOR."""
    probs = np.asarray(probs, dtype=float)
    if not 0 <= gold < probs.shape[-1]:
        raise ValueError(f"gold index {gold} out of range for {probs.shape[-1]} classes")
    return float(-np.log(max(probs[gold], PROB_FLOOR)))


def mean_cross_entropy(probs: np.ndarray, golds: np.ndarray) -> float:
    """Mean cross-entropy of a (batch, classes) probability matrix."""
    probs = np.asarray(probs, dtype=float)
    golds = np.asarray(golds, dtype=int)
    if golds.size and (golds.min() < 0 or golds.max() >= probs.shape[1]):
        raise ValueError("gold index out of range")
    picked = probs[np.arange(len(golds)), golds]
    return float(np.mean(-np.log(np.maximum(picked, PROB_FLOOR))))


def _apply_activation(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == SIGMOID:
        return sigmoid(z)
    if kind == SOFTMAX:
        return softmax(z)
    return z


def forward(layers: list[DenseLayer], inputs: np.ndarray) -> ForwardTrace:
    """Run a batch through the stack, recording every layer's z and a."""
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    trace = ForwardTrace(inputs=x)
    for i, layer in enumerate(layers):
        if x.shape[1] != layer.in_dim:
            raise ValueError(
                f"layer {i}: expected input width {layer.in_dim}, got {x.shape[1]}"
            )
        z = x @ layer.weights.T + layer.biases
        a = _apply_activation(layer.activation, z)
        trace.pre_activations.append(z)
        trace.activations.append(a)
        x = a
    return trace


def backward(layers: list[DenseLayer], trace: ForwardTrace,
             golds: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Gradients of the mean batch cross-entropy w.r.t. every weight and bias.

    Requires the final layer to be softmax (the loss is softmax +
    cross-entropy, so the output delta is ``(probs - onehot) / batch``).
    Returns one ``(d_weights, d_biases)`` pair per layer, in layer order.
    """
    if len(trace.activations) != len(layers):
        raise ValueError(
            f"trace length {len(trace.activations)} does not match layer count {len(layers)}"
        )
    if layers[-1].activation != SOFTMAX:
        raise ValueError("backward requires a softmax output layer")
    golds = np.asarray(golds, dtype=int)
    probs = trace.activations[-1]
    batch = probs.shape[0]
    if golds.shape != (batch,):
        raise ValueError(f"expected {batch} gold labels, got shape {golds.shape}")
    if golds.min() < 0 or golds.max() >= probs.shape[1]:
        raise ValueError("gold index out of range")

    onehot = np.zeros_like(probs)
    onehot[np.arange(batch), golds] = 1.0
    delta = (probs - onehot) / batch

    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(layers)  # type: ignore[list-item]
    for i in range(len(layers) - 1, -1, -1):
        layer = layers[i]
        layer_input = trace.activations[i - 1] if i > 0 else trace.inputs
        if delta.shape[1] != layer.out_dim or layer_input.shape[1] != layer.in_dim:
            raise ValueError(f"layer {i}: trace shapes do not match layer shapes")
        grads[i] = (delta.T @ layer_input, delta.sum(axis=0))
        if i > 0:
            dx = delta @ layer.weights
            prev = layers[i - 1]
            if prev.activation == SIGMOID:
                a = trace.activations[i - 1]
                delta = dx * a * (1.0 - a)
            elif prev.activation == IDENTITY:
                delta = dx
            else:
                raise ValueError("softmax is only supported as the output activation")
    return grads


class RmsProp:
    """RMSprop with one running squared-gradient cache per parameter tensor.

    Update rule, elementwise:
        cache <- rho * cache + (1 - rho) * grad**2
        param <- param - lr * grad / (sqrt(cache) + epsilon)

    Caches are keyed by a caller-chosen name so that disjoint parameter
    groups (e.g. a shared trunk vs. per-task heads) keep separate state.
    """

    def __init__(self, learning_rate: float = 0.001, rho: float = 0.9,
                 epsilon: float = 1e-8) -> None:
        if learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {learning_rate}")
        if not 0 < rho < 1:
            raise ValueError(f"rho must be in (0, 1), got {rho}")
        if epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {epsilon}")
        self.learning_rate = learning_rate
        self.rho = rho
        self.epsilon = epsilon
        self.cache: dict[str, np.ndarray] = {}

    def step(self, name: str, param: np.ndarray, grad: np.ndarray) -> None:
        """Apply one in-place RMSprop update to ``param``."""
        if param.shape != grad.shape:
            raise ValueError(
                f"shape mismatch for {name!r}: param {param.shape} vs grad {grad.shape}"
            )
        cache = self.cache.get(name)
        if cache is None:
            cache = np.zeros_like(param)
        elif cache.shape != param.shape:
            raise ValueError(
                f"shape mismatch for {name!r}: cache {cache.shape} vs param {param.shape}"
            )
        cache = self.rho * cache + (1.0 - self.rho) * grad * grad
        self.cache[name] = cache
        param -= self.learning_rate * grad / (np.sqrt(cache) + self.epsilon)
