import math

import numpy as np
import pytest

from facexpr import _kernels
from facexpr.mlp import (
    Expression,
    MlpModel,
    TrainConfig,
    XorShift64Star,
    backprop_step,
    classify,
    forward,
    gradients,
    init_weights,
    sigmoid,
    train,
)

XOR_X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], float)
XOR_T = np.array([[0], [1], [1], [0]], float)


def test_sigmoid_values():
    assert sigmoid(0.0) == 0.5
    assert 1 - 1e-12 < sigmoid(500.0) <= 1.0
    assert sigmoid(-700.0) >= 0.0
    t = np.linspace(-700, 700, 1001)
    np.testing.assert_allclose(sigmoid(t) + sigmoid(-t), 1.0, atol=1e-15)
    assert not np.isnan(sigmoid(t)).any()


def test_labels_follow_output_order():
    assert [e.label for e in Expression] == ["Anger", "Fear", "Surprise", "Sadness", "Happiness", "Disgust", "Neutral"]
    assert [int(e) for e in Expression] == list(range(1, 8))
    assert Expression.parse("sad") is Expression.SADNESS
    assert Expression.parse("Joy") is Expression.HAPPINESS
    with pytest.raises(ValueError):
        Expression.parse("contempt")


def test_xorshift_reference_values():
    # splitmix64(0) = 0xE220A8397B1DCDAF
    assert XorShift64Star(0).state == 0xE220A8397B1DCDAF
    g = XorShift64Star(0)
    x = 0xE220A8397B1DCDAF
    x ^= x >> 12
    x ^= (x << 25) & (2**64 - 1)
    x ^= x >> 27
    assert g.next_u64() == (x * 2685821657736338717) % 2**64


def test_xorshift_compiled_matches_python():
    g = XorShift64Star(42, stream=1)
    state = np.uint64(g.state)
    for _ in range(50):
        state, out = _kernels.xorshift_next(state)
        state = np.uint64(state)
        assert int(out) == g.next_u64()


def test_init_deterministic_and_in_range():
    a, b = init_weights([8, 5, 3], 7), init_weights([8, 5, 3], 7)
    for wa, wb in zip(a.weights + a.biases, b.weights + b.biases):
        np.testing.assert_array_equal(wa, wb)
    values = np.concatenate([w.ravel() for w in a.weights + a.biases])
    assert values.min() >= -0.5 and values.max() <= 0.5
    c = init_weights([8, 5, 3], 8)
    assert not np.array_equal(a.weights[0], c.weights[0])
    assert a.topology == [8, 5, 3]
    assert a.weights[0].shape == (5, 8) and a.biases[1].shape == (3,)


def test_init_rejects_degenerate():
    with pytest.raises(ValueError):
        init_weights([4, 0, 2], 0)
    with pytest.raises(ValueError):
        init_weights([4], 0)


def test_forward_zero_weights():
    m = MlpModel([np.zeros((4, 3)), np.zeros((2, 4))], [np.zeros(4), np.zeros(2)])
    np.testing.assert_array_equal(forward(m, [1.0, -2.0, 3.0])[-1], [0.5, 0.5])


def test_forward_single_unit():
    m = MlpModel([np.zeros((1, 1))], [np.array([1.3])])
    assert forward(m, [9.0])[-1][0] == pytest.approx(1 / (1 + math.exp(-1.3)), abs=1e-15)


def _forward_oracle(model, x):
    y = list(x)
    for w, b in zip(model.weights, model.biases):
        nxt = []
        for i in range(w.shape[0]):
            s = b[i]
            for j in range(w.shape[1]):
                s += y[j] * w[i, j]
            nxt.append(1.0 / (1.0 + math.exp(-s)))
        y = nxt
    return np.array(y)


def test_forward_matches_loops(rng):
    for seed in range(5):
        m = init_weights([8, 5, 3], seed)
        x = rng.normal(size=8)
        np.testing.assert_allclose(forward(m, x)[-1], _forward_oracle(m, x), atol=1e-12)


def test_forward_dimension_mismatch():
    with pytest.raises(ValueError):
        forward(init_weights([3, 2], 0), [1.0, 2.0])


def test_zero_error_leaves_weights():
    m = init_weights([4, 3, 2], 1)
    x = np.array([0.1, -0.2, 0.3, 0.4])
    target = forward(m, x)[-1]
    before = m.copy()
    assert backprop_step(m, x, target, 0.5) == 0.0
    for a, b in zip(m.weights + m.biases, before.weights + before.biases):
        np.testing.assert_array_equal(a, b)


def _loss(model, x, t):
    y = forward(model, x)[-1]
    return 0.5 * float(((y - t) ** 2).sum())


def _finite_difference(model, x, t, eps=1e-5):
    grads = []
    for arr in model.weights + model.biases:
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + eps
            up = _loss(model, x, t)
            arr[idx] = old - eps
            down = _loss(model, x, t)
            arr[idx] = old
            g[idx] = (up - down) / (2 * eps)
        grads.append(g)
    return grads


def test_gradient_matches_finite_differences():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        m = init_weights([8, 5, 3], seed)
        x, t = rng.normal(size=8), rng.random(3)
        gw, gb, _ = gradients(m, x, t)
        for a, n in zip(gw + gb, _finite_difference(m, x, t)):
            np.testing.assert_allclose(a, n, rtol=1e-4, atol=1e-8)


def test_gradient_deep_net():
    rng = np.random.default_rng(3)
    m = init_weights([4, 6, 5, 2], 3)
    x, t = rng.normal(size=4), rng.random(2)
    gw, gb, _ = gradients(m, x, t)
    for a, n in zip(gw + gb, _finite_difference(m, x, t)):
        np.testing.assert_allclose(a, n, rtol=1e-4, atol=1e-8)


def test_small_step_reduces_error():
    failures = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        m = init_weights([8, 5, 3], seed)
        x, t = rng.normal(size=8), (rng.random(3) > 0.5).astype(float)
        before = backprop_step(m, x, t, 0.01)
        if not _loss(m, x, t) < before:
            failures += 1
    assert failures <= 1


def test_backprop_rejects_bad_input():
    m = init_weights([2, 2, 1], 0)
    with pytest.raises(ValueError):
        backprop_step(m, [np.nan, 0.0], [1.0], 0.1)
    with pytest.raises(ValueError):
        backprop_step(m, [0.0, 0.0], [1.0, 0.0], 0.1)


def test_train_single_epoch_cap():
    _, history = train(init_weights([2, 3, 1], 0), XOR_X, XOR_T, TrainConfig(0.3, 1, 1e9, 0))
    assert history.size == 1


def test_train_stops_at_target():
    _, history = train(init_weights([2, 3, 1], 0), XOR_X, XOR_T, TrainConfig(0.3, 1000, 1e9, 0))
    assert history.size == 1
    _, history = train(init_weights([2, 4, 1], 0), XOR_X, XOR_T, TrainConfig(0.3, 100000, 0.05, 0))
    assert history[-1] <= 0.05 and np.all(history[:-1] > 0.05)


def test_train_zero_rate_keeps_weights():
    m = init_weights([2, 4, 1], 5)
    trained, _ = train(m, XOR_X, XOR_T, TrainConfig(0.0, 20, 0.0, 5))
    for a, b in zip(m.weights + m.biases, trained.weights + trained.biases):
        np.testing.assert_array_equal(a, b)


def test_train_does_not_touch_input_model():
    m = init_weights([2, 4, 1], 5)
    snapshot = m.copy()
    train(m, XOR_X, XOR_T, TrainConfig(0.5, 50, 0.0, 5))
    for a, b in zip(m.weights + m.biases, snapshot.weights + snapshot.biases):
        np.testing.assert_array_equal(a, b)


def test_train_bit_reproducible():
    cfg = TrainConfig(0.3, 300, 0.0, 11)
    a, ha = train(init_weights([2, 4, 1], 11), XOR_X, XOR_T, cfg)
    b, hb = train(init_weights([2, 4, 1], 11), XOR_X, XOR_T, cfg)
    assert ha.tobytes() == hb.tobytes()
    for wa, wb in zip(a.weights + a.biases, b.weights + b.biases):
        assert wa.tobytes() == wb.tobytes()


def test_compiled_kernel_matches_numpy_path():
    # the two-layer kernel and a reference loop built from backprop_step
    rng = np.random.default_rng(0)
    x = rng.normal(size=(9, 6))
    t = (rng.random((9, 3)) > 0.5).astype(float)
    cfg = TrainConfig(0.4, 25, 0.0, 3)
    trained, history = train(init_weights([6, 4, 3], 3), x, t, cfg)

    ref = init_weights([6, 4, 3], 3)
    state = np.uint64(XorShift64Star(cfg.seed, stream=1).state)
    order = np.arange(9)
    ref_hist = []
    for _ in range(cfg.max_epochs):
        state = np.uint64(_kernels.permute(order, state))
        ref_hist.append(sum(2 * backprop_step(ref, x[s], t[s], cfg.learning_rate) for s in order) / t.size)
    np.testing.assert_allclose(history, ref_hist, rtol=1e-12)
    for a, b in zip(trained.weights + trained.biases, ref.weights + ref.biases):
        np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)


def test_train_deep_topology_uses_numpy_path():
    trained, history = train(init_weights([2, 3, 3, 1], 0), XOR_X, XOR_T, TrainConfig(0.5, 30, 0.0, 0))
    assert history.size == 30 and trained.topology == [2, 3, 3, 1]


def test_train_rejects_empty():
    with pytest.raises(ValueError):
        train(init_weights([2, 2, 1], 0), np.zeros((0, 2)), np.zeros((0, 1)))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=-0.1)
    with pytest.raises(ValueError):
        TrainConfig(max_epochs=0)
    with pytest.warns(UserWarning):
        TrainConfig(learning_rate=1.5)


def _fixed_output_model(outputs):
    # zero weights, biases chosen so the outputs are exactly `outputs`
    outputs = np.asarray(outputs, float)
    bias = np.log(outputs / (1 - outputs))
    return MlpModel([np.zeros((7, 3))], [bias])


def test_classify_table_mapping():
    label, out = classify(_fixed_output_model([0.1, 0.1, 0.9, 0.1, 0.1, 0.1, 0.1]), np.zeros(3))
    assert label is Expression.SURPRISE
    np.testing.assert_allclose(out, [0.1, 0.1, 0.9, 0.1, 0.1, 0.1, 0.1])
    label, _ = classify(_fixed_output_model([0.2] * 6 + [0.7]), np.zeros(3))
    assert label is Expression.NEUTRAL


def test_classify_tie_goes_to_lowest():
    label, _ = classify(_fixed_output_model([0.5] * 7), np.zeros(3))
    assert label is Expression.ANGER


def test_classify_needs_seven_outputs():
    with pytest.raises(ValueError):
        classify(init_weights([3, 2, 6], 0), np.zeros(3))


def test_classify_argmax_invariant_under_monotone_rescale(rng):
    for _ in range(20):
        p = rng.uniform(0.05, 0.95, 7)
        label, _ = classify(_fixed_output_model(p), np.zeros(3))
        label2, _ = classify(_fixed_output_model(p**3), np.zeros(3))
        assert label == label2 == Expression(int(np.argmax(p)) + 1)


def test_outputs_in_open_unit_interval(rng):
    m = init_weights([5, 4, 7], 2)
    for _ in range(50):
        y = forward(m, rng.normal(size=5) * 3)[-1]
        assert np.all((y > 0) & (y < 1))


def test_model_dict_roundtrip():
    m = init_weights([3, 4, 7], 9)
    m2 = MlpModel.from_dict(m.to_dict())
    for a, b in zip(m.weights + m.biases, m2.weights + m2.biases):
        assert a.tobytes() == b.tobytes()
