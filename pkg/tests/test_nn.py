"""Unit tests for the dense-network core."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import finite_diff_grads, random_net, relative_error
from lexrel.nn import (
    IDENTITY,
    PROB_FLOOR,
    SIGMOID,
    SOFTMAX,
    DenseLayer,
    ForwardTrace,
    RmsProp,
    backward,
    cross_entropy,
    forward,
    glorot_init,
    mean_cross_entropy,
    sigmoid,
    softmax,
)


class TestGlorotInit:
    def test_bound_at_300x300(self):
        # sqrt(6/600) = 0.1 exactly
        layer = glorot_init(300, 300, np.random.default_rng(0))
        assert np.all(np.abs(layer.weights) <= 0.1)
        assert np.all(layer.biases == 0.0)

    def test_bound_at_smallest_dims(self):
        layer = glorot_init(1, 1, np.random.default_rng(7))
        assert abs(layer.weights[0, 0]) <= math.sqrt(3.0)
        assert layer.biases[0] == 0.0

    def test_same_seed_identical(self):
        a = glorot_init(5, 4, np.random.default_rng(42))
        b = glorot_init(5, 4, np.random.default_rng(42))
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.biases, b.biases)

    @pytest.mark.parametrize("in_dim,out_dim", [(0, 3), (3, 0), (-1, 2)])
    def test_bad_dims_raise(self, in_dim, out_dim):
        with pytest.raises(ValueError):
            glorot_init(in_dim, out_dim, np.random.default_rng(0))

    @given(st.integers(1, 40), st.integers(1, 40), st.integers(0, 2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_bound_property(self, in_dim, out_dim, seed):
        layer = glorot_init(in_dim, out_dim, np.random.default_rng(seed))
        limit = math.sqrt(6.0 / (in_dim + out_dim))
        assert np.all(np.abs(layer.weights) <= limit)


class TestSigmoid:
    def test_zero(self):
        assert sigmoid(np.array([0.0]))[0] == 0.5

    def test_ln3(self):
        # 1/(1+exp(-ln 3)) = 3/4
        assert sigmoid(np.array([math.log(3.0)]))[0] == pytest.approx(0.75, abs=1e-12)

    def test_saturation_no_overflow(self):
        out = sigmoid(np.array([-1000.0, 1000.0]))
        assert np.all(np.isfinite(out))
        assert 0.0 <= out[0] <= 1e-300
        assert out[1] == pytest.approx(1.0)

    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=20))
    @settings(max_examples=100, deadline=None)
    def test_range_property(self, values):
        out = sigmoid(np.array(values))
        assert np.all(out >= 0.0) and np.all(out <= 1.0)
        assert np.all(np.isfinite(out))


class TestSoftmax:
    def test_two_zeros(self):
        np.testing.assert_allclose(softmax(np.array([0.0, 0.0])), [0.5, 0.5])

    def test_three_equal(self):
        np.testing.assert_allclose(softmax(np.array([1.0, 1.0, 1.0])), np.full(3, 1 / 3))

    def test_shift_invariance_large_constant(self):
        a, b, c = 2.0, -1.0, 1000.0
        np.testing.assert_allclose(
            softmax(np.array([a + c, b + c])), softmax(np.array([a, b])), atol=1e-12
        )

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            softmax(np.array([]))

    @given(st.lists(st.floats(-100, 100), min_size=1, max_size=10))
    @settings(max_examples=100, deadline=None)
    def test_rows_sum_to_one(self, logits):
        out = softmax(np.array(logits))
        assert np.all(out > 0)
        assert abs(out.sum() - 1.0) <= 1e-9


class TestCrossEntropy:
    def test_perfect_prediction(self):
        assert cross_entropy(np.array([1.0, 0.0]), 0) == 0.0

    def test_half(self):
        assert cross_entropy(np.array([0.5, 0.5]), 1) == pytest.approx(math.log(2.0))

    def test_floor_engaged(self):
        loss = cross_entropy(np.array([1e-15, 1.0 - 1e-15]), 0)
        assert loss == pytest.approx(-math.log(PROB_FLOOR))
        assert loss == pytest.approx(27.631, abs=1e-3)

    def test_gold_out_of_range(self):
        with pytest.raises(ValueError):
            cross_entropy(np.array([0.5, 0.5]), 2)

    @given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=6), st.data())
    @settings(max_examples=100, deadline=None)
    def test_nonnegative(self, raw, data):
        probs = np.array(raw) / sum(raw)
        gold = data.draw(st.integers(0, len(raw) - 1))
        assert cross_entropy(probs, gold) >= 0.0


class TestForward:
    def test_identity_layer_passthrough(self):
        layer = DenseLayer(np.eye(3), np.zeros(3), IDENTITY)
        x = np.array([[1.0, -2.0, 3.0], [0.5, 0.0, -1.0]])
        trace = forward([layer], x)
        np.testing.assert_array_equal(trace.output, x)

    def test_zero_sigmoid_layer_gives_half(self):
        layer = DenseLayer(np.zeros((4, 3)), np.zeros(4), SIGMOID)
        out = forward([layer], np.ones((2, 3))).output
        np.testing.assert_allclose(out, 0.5)

    def test_two_layer_hand_computed_chain(self):
        # independent oracle: the full matrix chain written out by hand
        w1 = np.array([[0.3, -0.2], [0.1, 0.4]])
        b1 = np.array([0.05, -0.1])
        w2 = np.array([[1.0, -1.0], [0.5, 2.0]])
        b2 = np.array([0.0, 0.25])
        x = np.array([[0.2, -0.7], [1.5, 0.3]])

        z1 = x @ w1.T + b1
        a1 = 1.0 / (1.0 + np.exp(-z1))
        z2 = a1 @ w2.T + b2
        e = np.exp(z2 - z2.max(axis=1, keepdims=True))
        expected = e / e.sum(axis=1, keepdims=True)

        layers = [DenseLayer(w1, b1, SIGMOID), DenseLayer(w2, b2, SOFTMAX)]
        trace = forward(layers, x)
        np.testing.assert_allclose(trace.output, expected, atol=1e-12)
        np.testing.assert_allclose(trace.pre_activations[0], z1, atol=1e-12)

    def test_dimension_mismatch_names_layer(self):
        layers = [
            DenseLayer(np.zeros((3, 2)), np.zeros(3), SIGMOID),
            DenseLayer(np.zeros((2, 4)), np.zeros(2), SOFTMAX),
        ]
        with pytest.raises(ValueError, match="layer 1"):
            forward(layers, np.zeros((1, 2)))


class TestBackward:
    def test_zero_loss_delta_near_zero(self):
        # saturated logits make probs effectively one-hot at the gold class
        layer = DenseLayer(np.array([[50.0], [-50.0]]), np.zeros(2), SOFTMAX)
        x = np.array([[1.0]])
        trace = forward([layer], x)
        grads = backward([layer], trace, np.array([0]))
        assert np.all(np.abs(grads[0][0]) < 1e-6)
        assert np.all(np.abs(grads[0][1]) < 1e-6)

    def test_finite_differences_on_6_4_3_2_net(self):
        rng = np.random.default_rng(123)
        layers = random_net(rng, [6, 4, 3, 2])
        x = rng.normal(size=(5, 6))
        golds = rng.integers(0, 2, size=5)
        analytic = backward(layers, forward(layers, x), golds)
        numeric = finite_diff_grads(layers, x, golds, step=1e-4)
        for (aw, ab), (nw, nb) in zip(analytic, numeric):
            assert relative_error(aw, nw) < 1e-4
            assert relative_error(ab, nb) < 1e-4

    def test_batch_mean_reduction(self):
        rng = np.random.default_rng(5)
        layers = random_net(rng, [4, 3, 2])
        x1 = rng.normal(size=(1, 4))
        x2 = np.vstack([x1, x1])
        g1 = backward(layers, forward(layers, x1), np.array([1]))
        g2 = backward(layers, forward(layers, x2), np.array([1, 1]))
        for (w1, b1), (w2, b2) in zip(g1, g2):
            np.testing.assert_allclose(w1, w2, atol=1e-12)
            np.testing.assert_allclose(b1, b2, atol=1e-12)

    def test_requires_softmax_output(self):
        layer = DenseLayer(np.zeros((2, 2)), np.zeros(2), SIGMOID)
        trace = forward([layer], np.zeros((1, 2)))
        with pytest.raises(ValueError, match="softmax"):
            backward([layer], trace, np.array([0]))

    def test_trace_layer_mismatch(self):
        layers = random_net(np.random.default_rng(0), [3, 2])
        trace = ForwardTrace(inputs=np.zeros((1, 3)))
        with pytest.raises(ValueError):
            backward(layers, trace, np.array([0]))


class TestRmsProp:
    def test_zero_grad_is_noop_and_decays_cache(self):
        opt = RmsProp()
        param = np.array([1.0, -2.0])
        opt.step("p", param, np.array([1.0, 1.0]))  # populate the cache
        cache_before = opt.cache["p"].copy()
        before = param.copy()
        opt.step("p", param, np.zeros(2))
        np.testing.assert_array_equal(param, before)
        np.testing.assert_allclose(opt.cache["p"], 0.9 * cache_before)

    def test_closed_form_single_step(self):
        opt = RmsProp(learning_rate=0.001, rho=0.9, epsilon=1e-8)
        param = np.array([0.0])
        opt.step("p", param, np.array([1.0]))
        assert opt.cache["p"][0] == pytest.approx(0.1)
        expected = -0.001 / (math.sqrt(0.1) + 1e-8)
        assert param[0] == pytest.approx(expected, rel=1e-9)
        assert param[0] == pytest.approx(-0.0031623, abs=1e-7)

    def test_repeated_equal_grads_shrink_steps(self):
        opt = RmsProp()
        param = np.array([0.0])
        opt.step("p", param, np.array([1.0]))
        first = abs(param[0])
        prev_pos = param[0]
        opt.step("p", param, np.array([1.0]))
        second = abs(param[0] - prev_pos)
        assert second < first

    def test_shape_mismatch(self):
        opt = RmsProp()
        with pytest.raises(ValueError):
            opt.step("p", np.zeros(3), np.zeros(2))

    @pytest.mark.parametrize("kwargs", [
        {"learning_rate": 0.0}, {"rho": 0.0}, {"rho": 1.0}, {"epsilon": 0.0},
    ])
    def test_bad_hyperparameters(self, kwargs):
        with pytest.raises(ValueError):
            RmsProp(**kwargs)

    def test_cache_stays_nonnegative(self):
        rng = np.random.default_rng(3)
        opt = RmsProp()
        param = np.zeros(4)
        for _ in range(50):
            opt.step("p", param, rng.normal(size=4))
            assert np.all(opt.cache["p"] >= 0.0)
        assert np.all(np.isfinite(param))


def test_mean_cross_entropy_matches_per_row():
    rng = np.random.default_rng(11)
    probs = softmax(rng.normal(size=(6, 3)))
    golds = rng.integers(0, 3, size=6)
    per_row = [cross_entropy(probs[i], int(golds[i])) for i in range(6)]
    assert mean_cross_entropy(probs, golds) == pytest.approx(np.mean(per_row))
