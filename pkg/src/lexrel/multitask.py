"""Hard-parameter-sharing model and its training loop.

A model is a stack of shared sigmoid layers (the trunk) feeding one softmax
head per task. Training interleaves tasks: each round draws one random
batch per task, in task order, and updates the trunk plus that task's head
only. With a single task this is exactly a plain feed-forward classifier,
which doubles as the one-task baseline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .nn import (
    SIGMOID,
    SOFTMAX,
    DenseLayer,
    RmsProp,
    backward,
    forward,
    glorot_init,
    mean_cross_entropy,
)

DEFAULT_HIDDEN = (50, 50)

CHECKPOINT_VERSION = 1


@dataclass
class MultiTaskModel:
    shared: list[DenseLayer]
    heads: list[DenseLayer]
    input_dim: int
    optimizer: RmsProp

    @property
    def n_tasks(self) -> int:
        return len(self.heads)

    def task_layers(self, task: int) -> list[DenseLayer]:
        """The trunk plus one head, as a plain layer stack."""
        return [*self.shared, self.heads[task]]

    def parameter_count(self) -> int:
        return sum(l.weights.size + l.biases.size for l in [*self.shared, *self.heads])

    def snapshot(self) -> list[DenseLayer]:
        return [l.copy() for l in [*self.shared, *self.heads]]

    def restore(self, layers: list[DenseLayer]) -> None:
        n = len(self.shared)
        self.shared = [l.copy() for l in layers[:n]]
        self.heads = [l.copy() for l in layers[n:]]


@dataclass
class TrainConfig:
    batch_size: int = 32
    epochs: int = 100
    patience: int = 10
    seed: int = 0
    learning_rate: float = 0.001
    rho: float = 0.9

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.patience < 0:
            raise ValueError(f"patience must be >= 0, got {self.patience}")


@dataclass
class TaskData:
    """Labeled training and validation arrays for one task.

    ``train_y`` / ``val_y`` hold integer class indices into that task's
    label alphabet.
    """

    train_x: np.ndarray
    train_y: np.ndarray
    val_x: np.ndarray
    val_y: np.ndarray


@dataclass
class TrainHistory:
    """Per-epoch validation metrics and the best-epoch bookkeeping.

    ``val_accuracy[e][i]`` / ``val_loss[e][i]`` are task ``i``'s metrics
    after epoch ``e``; the selection metric is the mean accuracy across
    tasks.
    """

    val_accuracy: list[list[float]] = field(default_factory=list)
    val_loss: list[list[float]] = field(default_factory=list)
    mean_val_accuracy: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_metric: float = float("-inf")
    stopped_early: bool = False

    @property
    def epochs_run(self) -> int:
        return len(self.mean_val_accuracy)


def build_model(input_dim: int, hidden_widths: tuple[int, ...] | list[int] | None,
                task_class_counts: list[int] | tuple[int, ...], seed: int,
                learning_rate: float = 0.001, rho: float = 0.9) -> MultiTaskModel:
    """Construct a trunk+heads model with Glorot-uniform weights.

    ``hidden_widths`` defaults to two hidden layers of 50 units. Layers
    are initialized in order (trunk first, then heads), so a fixed seed
    fully determines every parameter.
    """
    if input_dim < 1:
        raise ValueError(f"input_dim must be >= 1, got {input_dim}")
    if not task_class_counts:
        raise ValueError("at least one task is required")
    if hidden_widths is None:
        hidden_widths = DEFAULT_HIDDEN
    rng = np.random.default_rng(seed)
    shared: list[DenseLayer] = []
    width = input_dim
    for h in hidden_widths:
        shared.append(glorot_init(width, h, rng, activation=SIGMOID))
        width = h
    heads = [glorot_init(width, int(c), rng, activation=SOFTMAX) for c in task_class_counts]
    return MultiTaskModel(shared=shared, heads=heads, input_dim=input_dim,
                          optimizer=RmsProp(learning_rate=learning_rate, rho=rho))


def predict(model: MultiTaskModel, task: int, x: np.ndarray) -> np.ndarray:
    """Probability matrix of head ``task`` for a feature batch."""
    if not 0 <= task < model.n_tasks:
        raise ValueError(f"task index {task} out of range for {model.n_tasks} tasks")
    return forward(model.task_layers(task), x).output


def predict_labels(model: MultiTaskModel, task: int, x: np.ndarray) -> np.ndarray:
    """Argmax class indices (ties resolved to the lowest index)."""
    return np.argmax(predict(model, task, x), axis=1)


def _train_step(model: MultiTaskModel, task: int, bx: np.ndarray, by: np.ndarray) -> None:
    layers = model.task_layers(task)
    trace = forward(layers, bx)
    grads = backward(layers, trace, by)
    n_shared = len(model.shared)
    for j in range(n_shared):
        model.optimizer.step(f"shared{j}.weights", model.shared[j].weights, grads[j][0])
        model.optimizer.step(f"shared{j}.biases", model.shared[j].biases, grads[j][1])
    model.optimizer.step(f"head{task}.weights", model.heads[task].weights, grads[n_shared][0])
    model.optimizer.step(f"head{task}.biases", model.heads[task].biases, grads[n_shared][1])


def evaluate_task(model: MultiTaskModel, task: int, x: np.ndarray,
                  y: np.ndarray) -> tuple[float, float]:
    """(accuracy, mean cross-entropy) of one head on a labeled set."""
    probs = predict(model, task, x)
    acc = float(np.mean(np.argmax(probs, axis=1) == np.asarray(y)))
    return acc, mean_cross_entropy(probs, y)


def train_multitask(model: MultiTaskModel, tasks: list[TaskData],
                    config: TrainConfig) -> tuple[MultiTaskModel, TrainHistory]:
    """Interleaved multi-task training with early stopping.

    One epoch is ``ceil(max_i |L_i| / batch_size)`` rounds; each round
    draws, for every task in order, one uniform batch (with replacement)
    from that task's labeled set and applies a single RMSprop step to the
    trunk and to that task's head. After each epoch every task is scored
    on its validation set; the parameters from the epoch with the best
    mean validation accuracy are restored at the end. Training stops once
    the metric has not improved for ``config.patience`` consecutive
    epochs.

    The batch RNG is ``np.random.default_rng(config.seed)`` and is
    consumed only by the batch draws, one ``integers(0, n_i, size=b)``
    call per task per round, so identical seeds and data give identical
    parameter trajectories.
    """
    if len(tasks) != model.n_tasks:
        raise ValueError(f"model has {model.n_tasks} heads but {len(tasks)} task datasets given")
    for i, t in enumerate(tasks):
        if len(t.train_x) == 0 or len(t.val_x) == 0:
            raise ValueError(f"task {i}: training and validation sets must be nonempty")
        if t.train_x.shape[1] != model.input_dim:
            raise ValueError(
                f"task {i}: feature width {t.train_x.shape[1]} does not match "
                f"model input_dim {model.input_dim}"
            )
        n_classes = model.heads[i].out_dim
        if len(t.train_y) and int(np.max(t.train_y)) >= n_classes:
            raise ValueError(f"task {i}: label index exceeds head width {n_classes}")

    model.optimizer.learning_rate = config.learning_rate
    model.optimizer.rho = config.rho
    rng = np.random.default_rng(config.seed)
    rounds = int(np.ceil(max(len(t.train_x) for t in tasks) / config.batch_size))
    history = TrainHistory()
    best_layers = model.snapshot()
    wait = 0

    for _epoch in range(config.epochs):
        for _round in range(rounds):
            for i, t in enumerate(tasks):
                idx = rng.integers(0, len(t.train_x), size=config.batch_size)
                _train_step(model, i, t.train_x[idx], t.train_y[idx])

        accs, losses = [], []
        for i, t in enumerate(tasks):
            acc, loss = evaluate_task(model, i, t.val_x, t.val_y)
            accs.append(acc)
            losses.append(loss)
        history.val_accuracy.append(accs)
        history.val_loss.append(losses)
        metric = float(np.mean(accs))
        history.mean_val_accuracy.append(metric)

        if metric > history.best_metric:
            history.best_metric = metric
            history.best_epoch = len(history.mean_val_accuracy) - 1
            best_layers = model.snapshot()
            wait = 0
        else:
            wait += 1
            if wait >= config.patience:
                history.stopped_early = True
                break

    model.restore(best_layers)
    return model, history


def save_checkpoint(model: MultiTaskModel, path) -> None:
    """Write a versioned .npz checkpoint (shapes, parameters, optimizer config)."""
    meta = {
        "version": CHECKPOINT_VERSION,
        "input_dim": model.input_dim,
        "hidden_widths": [l.out_dim for l in model.shared],
        "task_class_counts": [h.out_dim for h in model.heads],
        "learning_rate": model.optimizer.learning_rate,
        "rho": model.optimizer.rho,
        "epsilon": model.optimizer.epsilon,
    }
    arrays = {"meta": np.array(json.dumps(meta, sort_keys=True))}
    for j, layer in enumerate(model.shared):
        arrays[f"shared{j}.weights"] = layer.weights
        arrays[f"shared{j}.biases"] = layer.biases
    for j, head in enumerate(model.heads):
        arrays[f"head{j}.weights"] = head.weights
        arrays[f"head{j}.biases"] = head.biases
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> MultiTaskModel:
    """Rebuild a model from :func:`save_checkpoint` output, bit-exactly."""
    with np.load(path) as npz:
        meta = json.loads(str(npz["meta"]))
        if meta["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta['version']}")
        shared = [
            DenseLayer(npz[f"shared{j}.weights"].copy(), npz[f"shared{j}.biases"].copy(), SIGMOID)
            for j in range(len(meta["hidden_widths"]))
        ]
        heads = [
            DenseLayer(npz[f"head{j}.weights"].copy(), npz[f"head{j}.biases"].copy(), SOFTMAX)
            for j in range(len(meta["task_class_counts"]))
        ]
    return MultiTaskModel(
        shared=shared,
        heads=heads,
        input_dim=meta["input_dim"],
        optimizer=RmsProp(meta["learning_rate"], meta["rho"], meta["epsilon"]),
    )
