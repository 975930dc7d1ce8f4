"""Majority-class and multinomial logistic-regression baselines."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

from .nn import mean_cross_entropy, softmax


class MajorityClassifier:
    """Constant classifier predicting the most frequent training label."""

    def __init__(self, label: Hashable) -> None:
        self.label = label

    def predict(self, items: Sequence) -> list:
        return [self.label] * len(items)


def majority_baseline(train_labels: Sequence[Hashable]) -> MajorityClassifier:
    """Fit the majority baseline; frequency ties go to the smaller label."""
    if len(train_labels) == 0:
        raise ValueError("cannot fit a majority baseline on no labels")
    counts = Counter(train_labels)
    best = min(counts, key=lambda lbl: (-counts[lbl], lbl))
    return MajorityClassifier(best)


@dataclass
class LogRegModel:
    """Multinomial logistic regression: logits = x @ weights.T + biases."""

    weights: np.ndarray  # (classes, features)
    biases: np.ndarray   # (classes,)
    l2_lambda: float
    final_grad_norm: float = float("nan")

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return softmax(x @ self.weights.T + self.biases)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(x), axis=1)


def logreg_loss(model: LogRegModel, x: np.ndarray, y: np.ndarray) -> float:
    """Mean cross-entropy plus (lambda/2)*||W||^2 (biases unregularized)."""
    data_loss = mean_cross_entropy(model.predict_proba(x), y)
    return data_loss + 0.5 * model.l2_lambda * float(np.sum(model.weights ** 2))


def logreg_gradients(weights: np.ndarray, biases: np.ndarray, x: np.ndarray,
                     y: np.ndarray, l2_lambda: float) -> tuple[np.ndarray, np.ndarray]:
    probs = softmax(x @ weights.T + biases)
    onehot = np.zeros_like(probs)
    onehot[np.arange(len(y)), y] = 1.0
    delta = (probs - onehot) / len(y)
    return delta.T @ x + l2_lambda * weights, delta.sum(axis=0)


def train_logreg(x: np.ndarray, y: np.ndarray, l2_lambda: float = 1.0,
                 epochs: int = 500, learning_rate: float = 0.5,
                 seed: int = 0) -> LogRegModel:
    """Full-batch gradient descent on the L2-regularized mean cross-entropy.

    Parameters start at zero, so the run is deterministic regardless of
    ``seed`` (kept for interface parity with the stochastic trainers).
    The final gradient norm is stored on the model as a convergence
    diagnostic.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=int)
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} rows vs {len(y)} labels")
    if l2_lambda < 0:
        raise ValueError(f"l2_lambda must be >= 0, got {l2_lambda}")
    classes = np.unique(y)
    if len(classes) < 2:
        raise ValueError("logistic regression needs at least 2 classes in the data")
    n_classes = int(y.max()) + 1

    weights = np.zeros((n_classes, x.shape[1]))
    biases = np.zeros(n_classes)
    grad_norm = float("nan")
    for _ in range(epochs):
        gw, gb = logreg_gradients(weights, biases, x, y, l2_lambda)
        weights -= learning_rate * gw
        biases -= learning_rate * gb
        grad_norm = float(np.sqrt(np.sum(gw ** 2) + np.sum(gb ** 2)))
    return LogRegModel(weights=weights, biases=biases, l2_lambda=l2_lambda,
                       final_grad_norm=grad_norm)
