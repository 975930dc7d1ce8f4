"""Experiment orchestration: regimes, seed derivation, records, audit.

A run cell is one (regime, replicate seed) combination. All cells of a
replicate share the same lexical split and partition (derived from the
replicate seed only), so regimes are compared on identical data; each
cell's training randomness is derived from (replicate seed, regime), so
adding or removing a regime never shifts another regime's stream.

Result records are line-delimited JSON with sorted keys and no
whitespace, making a records file byte-reproducible for fixed inputs and
seeds. Wall-clock timings are therefore written to a separate sidecar
file rather than into the records.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import majority_baseline, train_logreg
from .config import ExperimentConfig
from .data import (
    SplitBundle,
    WordPair,
    encode_pairs,
    filter_by_vocabulary,
    lexical_split,
    load_embeddings,
    load_pairs,
    partition_train,
)
from .errors import ConfigError
from .multitask import (
    MultiTaskModel,
    TaskData,
    TrainConfig,
    build_model,
    predict,
    train_multitask,
)
from .metrics import accuracy, macro_f1
from .selflearn import (
    SelfLearnConfig,
    class_distribution,
    default_n_per_iteration,
    self_learn,
    stratified_select,
    write_history,
)

RECORDS_FILE = "records.jsonl"
TIMINGS_FILE = "timings.jsonl"
AUDIT_FILE = "audit.log"


def derive_seed(base: int, *labels) -> int:
    """Stable 63-bit sub-seed from a base seed and a label path.

    Streams for different label paths are independent, so adding a new
    regime or task never perturbs existing ones.
    """
    text = ":".join([str(base), *[str(l) for l in labels]])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


class RunAudit:
    """Ordered event log proving the test partition stays untouched.

    Events look like ``cell=<regime>/<seed> phase=train:start``; within
    each cell, every ``test`` phase must come after that cell's
    ``train:end``. :meth:`verify_test_isolation` checks the recorded
    order and is called once per cell and once at the end of a run.
    """

    def __init__(self) -> None:
        self.events: list[tuple[str, str]] = []  # (cell, phase)

    def record(self, cell: str, phase: str) -> None:
        self.events.append((cell, phase))

    def verify_test_isolation(self) -> None:
        train_end: dict[str, int] = {}
        for i, (cell, phase) in enumerate(self.events):
            if phase == "train:end":
                train_end[cell] = i
        for i, (cell, phase) in enumerate(self.events):
            if phase.startswith("test"):
                if cell not in train_end or i < train_end[cell]:
                    raise RuntimeError(
                        f"audit violation: cell {cell} touched the test partition "
                        "before its training finished"
                    )

    def write(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for cell, phase in self.events:
                fh.write(f"cell={cell} phase={phase}\n")


@dataclass
class TaskBundle:
    """Encoded per-task arrays; test pairs stay unencoded until evaluation."""

    name: str
    alphabet: tuple[str, ...]
    train_x: np.ndarray
    train_y: np.ndarray
    val_x: np.ndarray
    val_y: np.ndarray
    unlabeled_x: np.ndarray
    unlabeled_gold: np.ndarray  # audit only, never shown to trainers
    test_pairs: list[WordPair]

    @property
    def n_classes(self) -> int:
        return len(self.alphabet)

    def label_index(self, label: str) -> int:
        return self.alphabet.index(label)


def _labels_to_indices(pairs: list[WordPair], alphabet: tuple[str, ...]) -> np.ndarray:
    return np.array([alphabet.index(p.label) for p in pairs], dtype=int)


def task_bundles_from_bundle(bundle: SplitBundle, table, tasks: tuple[str, ...],
                             random_label: str) -> list[TaskBundle]:
    """Slice a dataset-level split into binary relation-vs-random tasks."""
    out = []
    for relation in tasks:
        wanted = {relation, random_label}
        alphabet = tuple(sorted(wanted))

        def part(pairs: list[WordPair]) -> list[WordPair]:
            return [p for p in pairs if p.label in wanted]

        train_p, val_p, unlab_p = part(bundle.train), part(bundle.validation), part(bundle.unlabeled)
        test_p = part(bundle.test)
        if not train_p or not val_p or not test_p:
            raise ConfigError(
                f"task {relation!r}: empty train/validation/test after filtering; "
                "dataset too small for this split"
            )
        out.append(TaskBundle(
            name=relation,
            alphabet=alphabet,
            train_x=encode_pairs(table, train_p),
            train_y=_labels_to_indices(train_p, alphabet),
            val_x=encode_pairs(table, val_p),
            val_y=_labels_to_indices(val_p, alphabet),
            unlabeled_x=encode_pairs(table, unlab_p),
            unlabeled_gold=_labels_to_indices(unlab_p, alphabet),
            test_pairs=test_p,
        ))
    return out


def prepare_replicate(cfg: ExperimentConfig, replicate_seed: int,
                      audit: RunAudit) -> list[TaskBundle]:
    """Load, filter, split and encode one replicate's data."""
    audit.record(f"prepare/{replicate_seed}", "load:dataset")
    pairs = load_pairs(cfg.dataset)
    table = load_embeddings(cfg.embeddings)
    kept, _dropped = filter_by_vocabulary(pairs, table)

    split_seed = cfg.split_seed if cfg.split_seed is not None else derive_seed(replicate_seed, "split")
    split = lexical_split(kept, cfg.test_vocab_fraction, seed=split_seed)
    bundle = partition_train(split.train_side, cfg.unlabeled_fraction,
                             cfg.validation_fraction,
                             seed=derive_seed(split_seed, "partition"))
    bundle = bundle.with_test(split.test)
    audit.record(f"prepare/{replicate_seed}", "split")
    return task_bundles_from_bundle(bundle, table, cfg.tasks, cfg.random_label)


class NeuralClassifier:
    """predict_proba adapter around one head of a MultiTaskModel."""

    def __init__(self, model: MultiTaskModel, task: int = 0) -> None:
        self.model = model
        self.task = task

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return predict(self.model, self.task, x)


def _train_config(cfg: ExperimentConfig, seed: int) -> TrainConfig:
    return TrainConfig(batch_size=cfg.batch_size, epochs=cfg.epochs,
                       patience=cfg.patience, seed=seed,
                       learning_rate=cfg.learning_rate, rho=cfg.rho)


def make_nn_trainer(cfg: ExperimentConfig, input_dim: int, n_classes: int,
                    val_x: np.ndarray, val_y: np.ndarray, base_seed: int):
    """Self-learning trainer: fresh model on first call, then warm/cold refits.

    Each call uses a sub-seed derived from the call index so retrains are
    deterministic but not identical replays.
    """
    counter = itertools.count()

    def trainer(x: np.ndarray, y: np.ndarray, previous) -> NeuralClassifier:
        t = next(counter)
        if previous is None:
            model = build_model(input_dim, cfg.hidden_layers, [n_classes],
                                seed=derive_seed(base_seed, "init"),
                                learning_rate=cfg.learning_rate, rho=cfg.rho)
        else:
            model = previous.model
        task_data = TaskData(train_x=x, train_y=y, val_x=val_x, val_y=val_y)
        train_multitask(model, [task_data], _train_config(cfg, derive_seed(base_seed, "fit", t)))
        return NeuralClassifier(model, task=0)

    return trainer


def _mean_val_accuracy(model: MultiTaskModel, tasks: list[TaskBundle]) -> float:
    accs = []
    for i, t in enumerate(tasks):
        preds = np.argmax(predict(model, i, t.val_x), axis=1)
        accs.append(float(np.mean(preds == t.val_y)))
    return float(np.mean(accs))


def multitask_self_learn(cfg: ExperimentConfig, tasks: list[TaskBundle],
                         base_seed: int) -> tuple[MultiTaskModel, list[dict]]:
    """Joint self-learning across tasks sharing one multi-task model.

    Each iteration pseudo-labels a stratified batch from every task's own
    pool using that task's head, grows every task's labeled set, retrains
    the shared model, and stops when all pools are empty or the mean
    validation accuracy drops below its supervised baseline. The best
    iteration's parameters are restored.
    """
    sl = SelfLearnConfig(n_per_iteration=cfg.selflearn_n,
                         max_iterations=cfg.selflearn_max_iterations,
                         retrain_mode=cfg.retrain_mode, seed=base_seed)
    model = build_model(tasks[0].train_x.shape[1], cfg.hidden_layers,
                        [t.n_classes for t in tasks], seed=derive_seed(base_seed, "init"),
                        learning_rate=cfg.learning_rate, rho=cfg.rho)
    train_x = [t.train_x for t in tasks]
    train_y = [t.train_y for t in tasks]
    task_data = [TaskData(x, y, t.val_x, t.val_y)
                 for x, y, t in zip(train_x, train_y, tasks)]
    base_dists = [class_distribution(t.train_y, t.n_classes) for t in tasks]
    pools = [np.arange(len(t.unlabeled_x)) for t in tasks]
    n_per_task = [sl.n_per_iteration if sl.n_per_iteration is not None
                  else default_n_per_iteration(len(p)) for p in pools]

    train_multitask(model, task_data, _train_config(cfg, derive_seed(base_seed, "fit", 0)))
    v0 = _mean_val_accuracy(model, tasks)
    best_layers, best_score, best_t = model.snapshot(), v0, 0
    history = [{"t": 0, "labeled_sizes": [len(y) for y in train_y],
                "pool_sizes": [len(p) for p in pools], "val_score": v0,
                "stopped_reason": None}]

    v_t = v0
    t = 0
    while True:
        if all(len(p) == 0 for p in pools):
            history[-1]["stopped_reason"] = "exhausted"
            break
        if v_t < v0:
            history[-1]["stopped_reason"] = "degraded"
            break
        if t >= sl.max_iterations:
            history[-1]["stopped_reason"] = "max_iterations"
            break
        t += 1
        for i, task in enumerate(tasks):
            if len(pools[i]) == 0:
                continue
            n_now = min(n_per_task[i], len(pools[i]))
            probs = predict(model, i, task.unlabeled_x[pools[i]])
            picks = stratified_select(probs, base_dists[i], n_now)
            rows = np.array([pools[i][j] for j, _ in picks], dtype=int)
            pseudo = np.array([c for _, c in picks], dtype=int)
            train_x[i] = np.concatenate([train_x[i], task.unlabeled_x[rows]])
            train_y[i] = np.concatenate([train_y[i], pseudo])
            keep = np.ones(len(pools[i]), dtype=bool)
            keep[[j for j, _ in picks]] = False
            pools[i] = pools[i][keep]

        if cfg.retrain_mode == "from_scratch":
            model = build_model(tasks[0].train_x.shape[1], cfg.hidden_layers,
                                [tk.n_classes for tk in tasks],
                                seed=derive_seed(base_seed, "init"),
                                learning_rate=cfg.learning_rate, rho=cfg.rho)
        task_data = [TaskData(x, y, tk.val_x, tk.val_y)
                     for x, y, tk in zip(train_x, train_y, tasks)]
        train_multitask(model, task_data, _train_config(cfg, derive_seed(base_seed, "fit", t)))
        v_t = _mean_val_accuracy(model, tasks)
        history.append({"t": t, "labeled_sizes": [len(y) for y in train_y],
                        "pool_sizes": [len(p) for p in pools], "val_score": v_t,
                        "stopped_reason": None})
        if v_t > best_score:
            best_layers, best_score, best_t = model.snapshot(), v_t, t

    model.restore(best_layers)
    history[-1]["best_t"] = best_t
    return model, history


def run_cell(cfg: ExperimentConfig, regime: str, replicate_seed: int,
             tasks: list[TaskBundle], table, audit: RunAudit,
             out_dir: Path | None = None,
             ) -> tuple[list[dict], list[tuple[str, MultiTaskModel]]]:
    """Train one regime and evaluate every task on its held-out test set.

    Returns the result records plus any trained network models as
    ``(name, model)`` pairs for optional checkpointing (baselines yield
    none).
    """
    cell = f"{regime}/{replicate_seed}"
    cell_seed = derive_seed(replicate_seed, regime)
    audit.record(cell, "train:start")
    checkpointable: list[tuple[str, MultiTaskModel]] = []

    # classifiers[i](test_x) -> predicted class indices for task i
    if regime == "baseline_majority":
        majors = [majority_baseline(list(t.train_y)).label for t in tasks]
        classifiers = [
            (lambda x, lbl=lbl: np.full(len(x), lbl, dtype=int)) for lbl in majors
        ]
    elif regime == "baseline_logreg":
        models = [train_logreg(t.train_x, t.train_y, l2_lambda=cfg.logreg_lambda,
                               epochs=cfg.logreg_epochs,
                               learning_rate=cfg.logreg_learning_rate,
                               seed=derive_seed(cell_seed, t.name))
                  for t in tasks]
        classifiers = [m.predict for m in models]
    elif regime == "nn_single":
        classifiers = []
        for task in tasks:
            model = build_model(task.train_x.shape[1], cfg.hidden_layers, [task.n_classes],
                                seed=derive_seed(cell_seed, task.name, "init"),
                                learning_rate=cfg.learning_rate, rho=cfg.rho)
            train_multitask(model, [TaskData(task.train_x, task.train_y, task.val_x, task.val_y)],
                            _train_config(cfg, derive_seed(cell_seed, task.name, "fit")))
            classifiers.append(lambda x, m=model: np.argmax(predict(m, 0, x), axis=1))
            checkpointable.append((task.name, model))
    elif regime == "self_learning":
        classifiers = []
        for task in tasks:
            trainer = make_nn_trainer(cfg, task.train_x.shape[1], task.n_classes,
                                      task.val_x, task.val_y,
                                      base_seed=derive_seed(cell_seed, task.name))
            sl = SelfLearnConfig(n_per_iteration=cfg.selflearn_n,
                                 max_iterations=cfg.selflearn_max_iterations,
                                 retrain_mode=cfg.retrain_mode, seed=cell_seed)
            result = self_learn(trainer, task.train_x, task.train_y, task.unlabeled_x,
                                task.val_x, task.val_y, sl, n_classes=task.n_classes)
            if out_dir is not None:
                write_history(result.history,
                              out_dir / f"selflearn_{task.name}_{replicate_seed}.jsonl")
            classifiers.append(
                lambda x, m=result.best_model: np.argmax(m.predict_proba(x), axis=1)
            )
            checkpointable.append((task.name, result.best_model.model))
    elif regime == "multitask":
        model = build_model(tasks[0].train_x.shape[1], cfg.hidden_layers,
                            [t.n_classes for t in tasks],
                            seed=derive_seed(cell_seed, "init"),
                            learning_rate=cfg.learning_rate, rho=cfg.rho)
        train_multitask(model, [TaskData(t.train_x, t.train_y, t.val_x, t.val_y) for t in tasks],
                        _train_config(cfg, derive_seed(cell_seed, "fit")))
        classifiers = [
            (lambda x, m=model, i=i: np.argmax(predict(m, i, x), axis=1))
            for i in range(len(tasks))
        ]
        checkpointable.append(("model", model))
    elif regime == "multitask_self_learning":
        model, _history = multitask_self_learn(cfg, tasks, base_seed=cell_seed)
        classifiers = [
            (lambda x, m=model, i=i: np.argmax(predict(m, i, x), axis=1))
            for i in range(len(tasks))
        ]
        checkpointable.append(("model", model))
    else:
        raise ConfigError(f"unknown regime {regime!r}")
    audit.record(cell, "train:end")

    records = []
    for task, classify in zip(tasks, classifiers):
        audit.record(cell, f"test:encode:{task.name}")
        test_x = encode_pairs(table, task.test_pairs)
        preds = classify(test_x)
        audit.record(cell, f"test:evaluate:{task.name}")
        gold = _labels_to_indices(task.test_pairs, task.alphabet)
        idx_alphabet = list(range(task.n_classes))
        records.append({
            "kind": "result",
            "dataset": cfg.dataset_name,
            "task": task.name,
            "regime": regime,
            "seed": replicate_seed,
            "config_hash": cfg.config_hash(),
            "accuracy": accuracy(list(preds), list(gold)),
            "macro_f1": macro_f1(list(preds), list(gold), idx_alphabet),
            "n_test": len(gold),
        })
    audit.verify_test_isolation()
    return records, checkpointable


def aggregate_records(records: list[dict]) -> list[dict]:
    """Mean and sample stdev across seeds per (dataset, task, regime)."""
    groups: dict[tuple, list[dict]] = {}
    for rec in records:
        if rec.get("kind") != "result":
            continue
        groups.setdefault((rec["dataset"], rec["task"], rec["regime"]), []).append(rec)
    out = []
    for (dataset, task, regime), cell in sorted(groups.items()):
        accs = [r["accuracy"] for r in cell]
        f1s = [r["macro_f1"] for r in cell]
        out.append({
            "kind": "aggregate",
            "dataset": dataset,
            "task": task,
            "regime": regime,
            "n_seeds": len(cell),
            "accuracy_mean": statistics.fmean(accs),
            "accuracy_stdev": statistics.stdev(accs) if len(accs) > 1 else 0.0,
            "macro_f1_mean": statistics.fmean(f1s),
            "macro_f1_stdev": statistics.stdev(f1s) if len(f1s) > 1 else 0.0,
        })
    return out


def record_line(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def run_experiment(cfg: ExperimentConfig) -> Path:
    """Execute the full (regime x seed) grid and write the records file.

    Returns the path of the records file. Timings and the audit trail go
    to sidecar files so the records stay byte-reproducible.
    """
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    audit = RunAudit()
    records: list[dict] = []
    timings: list[dict] = []

    table = load_embeddings(cfg.embeddings)
    for replicate_seed in cfg.seeds:
        tasks = prepare_replicate(cfg, replicate_seed, audit)
        for regime in cfg.regimes:
            started = time.perf_counter()
            cell_records, _models = run_cell(cfg, regime, replicate_seed, tasks, table,
                                             audit, out_dir)
            records.extend(cell_records)
            timings.append({
                "regime": regime,
                "seed": replicate_seed,
                "runtime_seconds": time.perf_counter() - started,
            })

    audit.verify_test_isolation()
    audit.write(out_dir / AUDIT_FILE)
    records.extend(aggregate_records(records))
    records_path = out_dir / RECORDS_FILE
    with open(records_path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(record_line(rec) + "\n")
    with open(out_dir / TIMINGS_FILE, "w", encoding="utf-8") as fh:
        for t in timings:
            fh.write(json.dumps(t, sort_keys=True) + "\n")
    return records_path
