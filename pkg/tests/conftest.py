"""Shared test helpers: finite differences, random nets, synthetic data."""

from __future__ import annotations

import numpy as np

from lexrel.nn import SIGMOID, SOFTMAX, DenseLayer, forward, glorot_init, mean_cross_entropy


def batch_loss(layers, x, golds) -> float:
    """Mean softmax cross-entropy of a layer stack, for finite differencing."""
    return mean_cross_entropy(forward(layers, x).output, golds)


def finite_diff_grads(layers, x, golds, step: float = 1e-4):
    """Central-difference gradients of the mean batch loss, parameter by parameter.

    Independent of the analytic backward pass: only evaluates the loss.
    """
    grads = []
    for layer in layers:
        pair = []
        for arr in (layer.weights, layer.biases):
            g = np.zeros_like(arr)
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                orig = arr[idx]
                arr[idx] = orig + step
                up = batch_loss(layers, x, golds)
                arr[idx] = orig - step
                down = batch_loss(layers, x, golds)
                arr[idx] = orig
                g[idx] = (up - down) / (2 * step)
            pair.append(g)
        grads.append(tuple(pair))
    return grads


def random_net(rng: np.random.Generator, dims: list[int]) -> list[DenseLayer]:
    """Sigmoid trunk + softmax head over the given width sequence."""
    layers = []
    for i in range(len(dims) - 1):
        act = SOFTMAX if i == len(dims) - 2 else SIGMOID
        layers.append(glorot_init(dims[i], dims[i + 1], rng, activation=act))
    return layers


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = np.maximum(np.abs(a) + np.abs(b), 1e-8)
    return float(np.max(np.abs(a - b) / denom))


def make_separable(n: int, dim: int, seed: int, margin: float = 1.0):
    """Linearly separable 2-class data with margin >= `margin` per point.

    Returns (x, y, w, b): labels are 1 where x @ w + b >= margin and 0
    where <= -margin; points inside the margin band are pushed out along w.
    """
    rng = np.random.default_rng(seed)
    w = rng.normal(size=dim)
    w /= np.linalg.norm(w)
    b = 0.0
    x = rng.normal(size=(n, dim))
    score = x @ w + b
    signs = np.where(score >= 0, 1.0, -1.0)
    short = np.abs(score) < margin
    x[short] += np.outer(signs[short] * (margin - np.abs(score[short])), w)
    y = (x @ w + b >= 0).astype(int)
    return x, y, w, b
