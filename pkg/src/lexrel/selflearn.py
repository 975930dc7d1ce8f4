"""Iterative self-learning over a fixed unlabeled pool.

The loop trains a classifier on the labeled set, pseudo-labels the most
confident members of the unlabeled pool (stratified so the added batch
matches the initial labeled class distribution), grows the labeled set,
retrains, and repeats while the pool is nonempty and the validation score
stays at or above the initial supervised score. The best-scoring model
across all iterations is returned, so degradation is always reverted.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np


class Classifier(Protocol):
    def predict_proba(self, x: np.ndarray) -> np.ndarray: ...


# Called as trainer(x, y, previous); ``previous`` is None for the initial
# fit and, in from_scratch mode, on every retrain.
Trainer = Callable[[np.ndarray, np.ndarray, "Classifier | None"], "Classifier"]

WARM_START = "warm_start"
FROM_SCRATCH = "from_scratch"

STOP_EXHAUSTED = "exhausted"
STOP_DEGRADED = "degraded"
STOP_MAX_ITERATIONS = "max_iterations"


@dataclass
class SelfLearnConfig:
    """Knobs for the loop.

    ``n_per_iteration=None`` selects the default ``max(32,
    ceil(0.05 * |U0|))``; the effective count is always clamped to the
    current pool size.
    """

    n_per_iteration: int | None = None
    max_iterations: int = 1000
    retrain_mode: str = WARM_START
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_per_iteration is not None and self.n_per_iteration < 1:
            raise ValueError(f"n_per_iteration must be >= 1, got {self.n_per_iteration}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.retrain_mode not in (WARM_START, FROM_SCRATCH):
            raise ValueError(f"unknown retrain_mode {self.retrain_mode!r}")


@dataclass
class IterationRecord:
    t: int
    labeled_size: int
    unlabeled_size: int
    val_score: float
    added_per_class: dict[int, int] = field(default_factory=dict)
    stopped_reason: str | None = None

    def to_json(self) -> str:
        payload = {
            "t": self.t,
            "labeled_size": self.labeled_size,
            "unlabeled_size": self.unlabeled_size,
            "val_score": self.val_score,
            "added_per_class": {str(k): v for k, v in sorted(self.added_per_class.items())},
            "stopped_reason": self.stopped_reason,
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))


@dataclass
class SelfLearnResult:
    best_model: Classifier
    best_t: int
    history: list[IterationRecord]

    @property
    def best_score(self) -> float:
        return self.history[self.best_t].val_score


def write_history(history: list[IterationRecord], path) -> None:
    """Dump per-iteration records as one JSON object per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in history:
            fh.write(rec.to_json() + "\n")


def default_n_per_iteration(pool_size: int) -> int:
    return max(32, math.ceil(0.05 * pool_size))


def class_distribution(labels: np.ndarray, n_classes: int) -> np.ndarray:
    """Proportion of each class index in ``labels``."""
    labels = np.asarray(labels, dtype=int)
    if len(labels) == 0:
        raise ValueError("cannot take the class distribution of an empty label set")
    counts = np.bincount(labels, minlength=n_classes).astype(float)
    return counts / counts.sum()


def largest_remainder_quotas(base_distribution: np.ndarray, n_select: int) -> np.ndarray:
    """Integer per-class quotas summing to ``n_select``.

    Each class gets floor(n * proportion); leftover units go to the
    classes with the largest fractional remainders, ties broken by lower
    class index.
    """
    props = np.asarray(base_distribution, dtype=float)
    if n_select <= 0:
        raise ValueError(f"selection size must be >= 1, got {n_select}")
    if props.ndim != 1 or len(props) == 0:
        raise ValueError("base_distribution must be a nonempty vector")
    if np.any(props < 0) or not math.isclose(props.sum(), 1.0, abs_tol=1e-9):
        raise ValueError("base_distribution must be nonnegative and sum to 1")
    raw = props * n_select
    quotas = np.floor(raw).astype(int)
    remainder = n_select - int(quotas.sum())
    order = sorted(range(len(props)), key=lambda c: (-(raw[c] - quotas[c]), c))
    for c in order[:remainder]:
        quotas[c] += 1
    return quotas


def stratified_select(class_probs: np.ndarray, base_distribution: np.ndarray,
                      n_select: int) -> list[tuple[int, int]]:
    """Pick up to ``n_select`` pool members, stratified by class quota.

    Quotas come from :func:`largest_remainder_quotas`. Classes are then
    processed in descending-quota order (ties by class index); class ``c``
    takes the not-yet-taken rows with the highest probability for ``c``
    and pseudo-labels them ``c``. If the pool is smaller than the total
    quota the whole pool is consumed, later classes absorbing whatever
    remains. Returns ``(row_index, pseudo_label)`` pairs.
    """
    probs = np.asarray(class_probs, dtype=float)
    if probs.ndim != 2:
        raise ValueError(f"class_probs must be 2-D, got shape {probs.shape}")
    quotas = largest_remainder_quotas(base_distribution, n_select)
    if len(quotas) != probs.shape[1]:
        raise ValueError(
            f"base_distribution has {len(quotas)} classes but probabilities have {probs.shape[1]}"
        )

    taken = np.zeros(len(probs), dtype=bool)
    selected: list[tuple[int, int]] = []
    for c in sorted(range(len(quotas)), key=lambda c: (-quotas[c], c)):
        if quotas[c] == 0:
            continue
        candidates = np.flatnonzero(~taken)
        if len(candidates) == 0:
            break
        # stable sort: equal confidences resolve to the lower row index
        order = candidates[np.argsort(-probs[candidates, c], kind="stable")]
        for idx in order[: quotas[c]]:
            taken[idx] = True
            selected.append((int(idx), int(c)))
    return selected


def _accuracy_of(model: Classifier, x: np.ndarray, y: np.ndarray) -> float:
    preds = np.argmax(model.predict_proba(x), axis=1)
    return float(np.mean(preds == np.asarray(y)))


def self_learn(trainer: Trainer, labeled_x: np.ndarray, labeled_y: np.ndarray,
               unlabeled_x: np.ndarray, val_x: np.ndarray, val_y: np.ndarray,
               config: SelfLearnConfig, n_classes: int | None = None) -> SelfLearnResult:
    """Run the self-learning loop and return the best model seen.

    ``labeled_y`` / ``val_y`` are integer class indices. The loop:

    1. trains on the initial labeled set, recording baseline score V0;
    2. while the pool is nonempty and the latest score >= V0: scores the
       pool, moves a stratified batch of pseudo-labeled rows into the
       labeled set, retrains (warm-start by default), re-evaluates;
    3. returns the model from the highest-scoring iteration (ties go to
       the earliest, so the supervised baseline wins a tie with any
       later model).

    Labeled rows are append-only: gold labels are never rewritten, and
    every pool row ends up either still in the pool or in the labeled set.
    """
    labeled_x = np.asarray(labeled_x, dtype=float)
    labeled_y = np.asarray(labeled_y, dtype=int)
    unlabeled_x = np.asarray(unlabeled_x, dtype=float)
    val_y = np.asarray(val_y, dtype=int)
    if len(labeled_x) == 0:
        raise ValueError("the initial labeled set must be nonempty")
    if len(val_x) == 0:
        raise ValueError("the validation set must be nonempty")
    if n_classes is None:
        n_classes = int(labeled_y.max()) + 1

    base_dist = class_distribution(labeled_y, n_classes)
    pool = np.arange(len(unlabeled_x))  # indices into unlabeled_x still unused

    model = trainer(labeled_x, labeled_y, None)
    v0 = _accuracy_of(model, val_x, val_y)
    history = [IterationRecord(0, len(labeled_x), len(pool), v0)]
    models = [model]

    n_requested = config.n_per_iteration
    if n_requested is None:
        n_requested = default_n_per_iteration(len(pool))

    v_t = v0
    while True:
        if len(pool) == 0:
            history[-1].stopped_reason = STOP_EXHAUSTED
            break
        if v_t < v0:
            history[-1].stopped_reason = STOP_DEGRADED
            break
        if len(history) - 1 >= config.max_iterations:
            history[-1].stopped_reason = STOP_MAX_ITERATIONS
            break

        n_now = min(n_requested, len(pool))
        probs = model.predict_proba(unlabeled_x[pool])
        picks = stratified_select(probs, base_dist, n_now)

        picked_rows = np.array([pool[i] for i, _ in picks], dtype=int)
        pseudo = np.array([c for _, c in picks], dtype=int)
        labeled_x = np.concatenate([labeled_x, unlabeled_x[picked_rows]])
        labeled_y = np.concatenate([labeled_y, pseudo])
        keep = np.ones(len(pool), dtype=bool)
        keep[[i for i, _ in picks]] = False
        pool = pool[keep]

        previous = model if config.retrain_mode == WARM_START else None
        model = trainer(labeled_x, labeled_y, previous)
        v_t = _accuracy_of(model, val_x, val_y)

        added = {int(c): int(n) for c, n in zip(*np.unique(pseudo, return_counts=True))}
        history.append(IterationRecord(len(history), len(labeled_x), len(pool), v_t, added))
        models.append(model)

    scores = [rec.val_score for rec in history]
    best_t = int(np.argmax(scores))  # argmax ties resolve to the earliest t
    return SelfLearnResult(best_model=models[best_t], best_t=best_t, history=history)
