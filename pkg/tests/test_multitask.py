"""Tests for the shared-trunk model, training loop, and checkpoints."""

import copy
import math

import numpy as np
import pytest

from conftest import make_separable
from lexrel import multitask as mt
from lexrel.baselines import train_logreg
from lexrel.multitask import (
    MultiTaskModel,
    TaskData,
    TrainConfig,
    build_model,
    evaluate_task,
    load_checkpoint,
    predict,
    save_checkpoint,
    train_multitask,
    _train_step,
)
from lexrel.nn import RmsProp, backward, forward


def tiny_task(seed: int, n: int = 40, dim: int = 6) -> TaskData:
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, dim))
    y = rng.integers(0, 2, size=n)
    return TaskData(x[: n - 10], y[: n - 10], x[n - 10:], y[n - 10:])


class TestBuildModel:
    def test_parameter_count_paper_shape(self):
        # 600*50+50 + 50*50+50 + 2*(50*2+2) = 32,804
        model = build_model(600, (50, 50), [2, 2], seed=0)
        assert model.parameter_count() == 32_804

    def test_single_task_shape(self):
        model = build_model(10, (50, 50), [2], seed=0)
        assert model.n_tasks == 1
        assert model.heads[0].out_dim == 2

    def test_same_seed_identical(self):
        a = build_model(8, (5, 4), [2, 3], seed=99)
        b = build_model(8, (5, 4), [2, 3], seed=99)
        for la, lb in zip([*a.shared, *a.heads], [*b.shared, *b.heads]):
            assert np.array_equal(la.weights, lb.weights)
            assert np.array_equal(la.biases, lb.biases)

    def test_empty_task_list_raises(self):
        with pytest.raises(ValueError):
            build_model(10, (5,), [], seed=0)

    def test_default_hidden_widths(self):
        model = build_model(12, None, [2], seed=0)
        assert [l.out_dim for l in model.shared] == [50, 50]


class TestPredict:
    def test_zeroed_parameters_give_uniform(self):
        model = build_model(6, (5, 5), [2], seed=0)
        for layer in [*model.shared, *model.heads]:
            layer.weights[:] = 0.0
            layer.biases[:] = 0.0
        out = predict(model, 0, np.random.default_rng(0).normal(size=(4, 6)))
        np.testing.assert_allclose(out, 0.5)

    def test_agrees_with_forward(self):
        model = build_model(6, (5,), [3], seed=1)
        x = np.random.default_rng(2).normal(size=(7, 6))
        np.testing.assert_array_equal(
            predict(model, 0, x), forward(model.task_layers(0), x).output
        )

    def test_rows_sum_to_one(self):
        model = build_model(4, (3,), [2, 4], seed=3)
        x = np.random.default_rng(4).normal(size=(5, 4))
        for task in range(2):
            np.testing.assert_allclose(predict(model, task, x).sum(axis=1), 1.0, atol=1e-9)

    def test_argmax_invariant_to_head_logit_shift(self):
        rng = np.random.default_rng(5)
        model = build_model(4, (3,), [3], seed=6)
        x = rng.normal(size=(20, 4))
        before = np.argmax(predict(model, 0, x), axis=1)
        model.heads[0].biases += 1000.0  # constant shift of every logit
        after = np.argmax(predict(model, 0, x), axis=1)
        np.testing.assert_array_equal(before, after)

    def test_task_out_of_range(self):
        model = build_model(4, (3,), [2], seed=0)
        with pytest.raises(ValueError):
            predict(model, 1, np.zeros((1, 4)))


class TestHardSharing:
    def test_step_for_task_freezes_other_heads(self):
        model = build_model(6, (5, 4), [2, 2, 2], seed=7)
        rng = np.random.default_rng(8)
        bx, by = rng.normal(size=(8, 6)), rng.integers(0, 2, size=8)
        before = {i: (model.heads[i].weights.copy(), model.heads[i].biases.copy())
                  for i in range(3)}
        trunk_before = [l.weights.copy() for l in model.shared]

        _train_step(model, 1, bx, by)

        for i in (0, 2):
            assert np.array_equal(model.heads[i].weights, before[i][0])
            assert np.array_equal(model.heads[i].biases, before[i][1])
        assert not np.array_equal(model.heads[1].weights, before[1][0])
        assert any(not np.array_equal(l.weights, w)
                   for l, w in zip(model.shared, trunk_before))

    def test_gradient_of_other_head_is_zero(self):
        # backprop through trunk+head_i touches no other head at all
        model = build_model(5, (4,), [2, 2], seed=9)
        x = np.random.default_rng(10).normal(size=(3, 5))
        layers = model.task_layers(0)
        grads = backward(layers, forward(layers, x), np.array([0, 1, 0]))
        assert len(grads) == len(model.shared) + 1  # head 1 has no gradient entry


def reference_single_task_loop(model: MultiTaskModel, task: TaskData,
                               config: TrainConfig):
    """Independent plain single-task trainer mirroring the documented protocol.

    Written directly against the nn primitives; used as the oracle for
    the M=1 equivalence contract.
    """
    rng = np.random.default_rng(config.seed)
    opt = RmsProp(config.learning_rate, config.rho)
    rounds = math.ceil(len(task.train_x) / config.batch_size)
    best_metric, best_snapshot, wait = float("-inf"), None, 0
    metrics = []
    for _epoch in range(config.epochs):
        for _round in range(rounds):
            idx = rng.integers(0, len(task.train_x), size=config.batch_size)
            layers = [*model.shared, model.heads[0]]
            grads = backward(layers, forward(layers, task.train_x[idx]), task.train_y[idx])
            for j, layer in enumerate(model.shared):
                opt.step(f"s{j}w", layer.weights, grads[j][0])
                opt.step(f"s{j}b", layer.biases, grads[j][1])
            opt.step("hw", model.heads[0].weights, grads[-1][0])
            opt.step("hb", model.heads[0].biases, grads[-1][1])
        probs = forward([*model.shared, model.heads[0]], task.val_x).output
        metric = float(np.mean(np.argmax(probs, axis=1) == task.val_y))
        metrics.append(metric)
        if metric > best_metric:
            best_metric = metric
            best_snapshot = [l.copy() for l in [*model.shared, model.heads[0]]]
            wait = 0
        else:
            wait += 1
            if wait >= config.patience:
                break
    model.shared = [l.copy() for l in best_snapshot[:-1]]
    model.heads = [best_snapshot[-1].copy()]
    return metrics


class TestTrainMultitask:
    def test_m1_equivalence_with_reference_loop(self):
        task = tiny_task(20, n=50, dim=6)
        config = TrainConfig(batch_size=8, epochs=12, patience=4, seed=77)

        model_a = build_model(6, (5, 4), [2], seed=55)
        model_b = build_model(6, (5, 4), [2], seed=55)
        _, history = train_multitask(model_a, [task], config)
        ref_metrics = reference_single_task_loop(model_b, task, config)

        assert history.mean_val_accuracy == ref_metrics
        for la, lb in zip([*model_a.shared, *model_a.heads],
                          [*model_b.shared, *model_b.heads]):
            np.testing.assert_array_equal(la.weights, lb.weights)
            np.testing.assert_array_equal(la.biases, lb.biases)

    def test_determinism(self):
        tasks = [tiny_task(30), tiny_task(31)]
        config = TrainConfig(batch_size=8, epochs=6, patience=6, seed=5)
        m1, h1 = train_multitask(build_model(6, (5,), [2, 2], seed=1),
                                 copy.deepcopy(tasks), config)
        m2, h2 = train_multitask(build_model(6, (5,), [2, 2], seed=1),
                                 copy.deepcopy(tasks), config)
        assert h1.mean_val_accuracy == h2.mean_val_accuracy
        assert h1.val_loss == h2.val_loss
        for la, lb in zip([*m1.shared, *m1.heads], [*m2.shared, *m2.heads]):
            assert np.array_equal(la.weights, lb.weights)

    def test_steps_per_epoch_is_rounds_times_tasks(self, monkeypatch):
        calls = []
        original = mt._train_step
        monkeypatch.setattr(mt, "_train_step", lambda *a: calls.append(a[1]) or original(*a))
        tasks = [tiny_task(40, n=45), tiny_task(41, n=20)]
        config = TrainConfig(batch_size=8, epochs=3, patience=100, seed=0)
        train_multitask(build_model(6, (5,), [2, 2], seed=2), tasks, config)
        rounds = math.ceil(max(len(t.train_x) for t in tasks) / config.batch_size)
        assert rounds == 5  # largest labeled set has 35 rows, batches of 8
        assert len(calls) == config.epochs * rounds * 2
        # within each round, tasks run in order 0, 1
        assert calls[: 4] == [0, 1, 0, 1]

    def test_early_stopping_returns_best_epoch(self):
        tasks = [tiny_task(50)]
        config = TrainConfig(batch_size=8, epochs=40, patience=3, seed=9)
        model, history = train_multitask(build_model(6, (4,), [2], seed=3), tasks, config)
        best = history.mean_val_accuracy[history.best_epoch]
        assert best == history.best_metric
        assert all(best >= m for m in history.mean_val_accuracy[history.best_epoch:])
        # restored parameters really score the recorded best metric
        acc, _ = evaluate_task(model, 0, tasks[0].val_x, tasks[0].val_y)
        assert acc == pytest.approx(best)

    def test_reaches_95_percent_on_separable_data(self):
        # independent oracle: logistic regression fully separates this set
        x, y, _, _ = make_separable(200, 10, seed=42, margin=1.0)
        tr_x, val_x, tr_y, val_y = x[:160], x[160:], y[:160], y[160:]
        lr = train_logreg(tr_x, tr_y, l2_lambda=0.0, epochs=300, learning_rate=1.0)
        assert np.mean(lr.predict(tr_x) == tr_y) == 1.0

        model = build_model(10, (50, 50), [2], seed=1)
        config = TrainConfig(batch_size=32, epochs=200, patience=200, seed=2)
        _, history = train_multitask(model, [TaskData(tr_x, tr_y, val_x, val_y)], config)
        assert history.best_metric >= 0.95

    def test_empty_task_dataset_raises(self):
        task = TaskData(np.zeros((0, 4)), np.zeros(0, dtype=int),
                        np.zeros((1, 4)), np.zeros(1, dtype=int))
        with pytest.raises(ValueError):
            train_multitask(build_model(4, (3,), [2], seed=0), [task],
                            TrainConfig(epochs=1))

    def test_dimension_mismatch_raises(self):
        task = tiny_task(60, dim=5)
        with pytest.raises(ValueError):
            train_multitask(build_model(4, (3,), [2], seed=0), [task],
                            TrainConfig(epochs=1))

    def test_task_count_mismatch_raises(self):
        with pytest.raises(ValueError):
            train_multitask(build_model(6, (3,), [2, 2], seed=0), [tiny_task(1)],
                            TrainConfig(epochs=1))


class TestTrainConfig:
    @pytest.mark.parametrize("kwargs", [
        {"batch_size": 0}, {"epochs": 0}, {"patience": -1},
    ])
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, tmp_path):
        model = build_model(7, (5, 3), [2, 4], seed=123)
        # train a little so parameters are not fresh
        tasks = [tiny_task(70, dim=7), tiny_task(71, dim=7)]
        tasks[1].train_y = np.random.default_rng(0).integers(0, 4, size=len(tasks[1].train_y))
        tasks[1].val_y = np.random.default_rng(1).integers(0, 4, size=len(tasks[1].val_y))
        train_multitask(model, tasks, TrainConfig(batch_size=8, epochs=2, seed=3))

        path = tmp_path / "model.npz"
        save_checkpoint(model, path)
        loaded = load_checkpoint(path)
        assert loaded.input_dim == model.input_dim
        assert loaded.optimizer.learning_rate == model.optimizer.learning_rate
        for la, lb in zip([*model.shared, *model.heads], [*loaded.shared, *loaded.heads]):
            assert np.array_equal(la.weights, lb.weights)
            assert np.array_equal(la.biases, lb.biases)
            assert la.activation == lb.activation

    def test_version_check(self, tmp_path):
        model = build_model(3, (2,), [2], seed=0)
        path = tmp_path / "model.npz"
        save_checkpoint(model, path)
        import json

        with np.load(path) as npz:
            arrays = {k: npz[k] for k in npz.files}
        meta = json.loads(str(arrays["meta"]))
        meta["version"] = 999
        arrays["meta"] = np.array(json.dumps(meta))
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)
        with pytest.raises(ValueError, match="version"):
            load_checkpoint(path)
