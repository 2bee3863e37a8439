from __future__ import annotations

import numpy as np
import pytest

from padc.engine import (
    Activation,
    ConvLayer,
    FeatureMap,
    NetKind,
    OptimizerKind,
    OptimizerState,
    backward,
    conv1d_same,
    decode_net,
    deinterleave,
    encode_net,
    forward,
    interleave,
    opt_step,
)
from padc.errors import FormatError, ShapeError, StateError
from padc.nets import NetSpec, build_net, describe, recover


def test_conv1d_same_is_a_zero_padded_correlation():
    x = FeatureMap(np.array([[1.0, 2.0, 3.0]]))
    identity = ConvLayer(np.array([[[0.0, 1.0, 0.0]]]), np.zeros(1))
    delay = ConvLayer(np.array([[[1.0, 0.0, 0.0]]]), np.zeros(1))
    diff = ConvLayer(np.array([[[-1.0, 0.0, 1.0]]]), np.array([0.5]))
    np.testing.assert_array_equal(conv1d_same(x, identity).data, [[1.0, 2.0, 3.0]])
    np.testing.assert_array_equal(conv1d_same(x, delay).data, [[0.0, 1.0, 2.0]])
    np.testing.assert_array_equal(conv1d_same(x, diff).data, [[2.5, 2.5, -1.5]])


def test_relu_clamps_negative_pre_activations():
    x = FeatureMap(np.array([[1.0, -2.0, 3.0]]))
    layer = ConvLayer(np.array([[[1.0]]]), np.array([-1.5]), Activation.RELU)
    np.testing.assert_array_equal(conv1d_same(x, layer).data, [[0.0, 0.0, 1.5]])


def test_conv_rejects_even_kernels_and_channel_mismatch():
    with pytest.raises(ShapeError):
        ConvLayer(np.zeros((1, 1, 2)), np.zeros(1))
    with pytest.raises(ShapeError):
        conv1d_same(FeatureMap(np.zeros((2, 5))), ConvLayer(np.zeros((1, 1, 3)), np.zeros(1)))


def test_feature_map_rejects_non_finite_values():
    with pytest.raises(ShapeError):
        FeatureMap(np.array([[1.0, np.nan]]))


def test_interleave_then_deinterleave():
    a = FeatureMap(np.array([[0.0, 2.0], [10.0, 12.0]]))
    b = FeatureMap(np.array([[1.0, 3.0], [11.0, 13.0]]))
    merged = interleave([a, b])
    np.testing.assert_array_equal(merged.data, [[0.0, 1.0, 2.0, 3.0], [10.0, 11.0, 12.0, 13.0]])
    back = deinterleave(merged, 2)
    np.testing.assert_array_equal(back[1].data, b.data)
    with pytest.raises(ShapeError):
        interleave([a, FeatureMap(np.zeros((2, 3)))])


@pytest.mark.parametrize("kind,n_inputs", [(NetKind.LINEARIZATION, 1), (NetKind.MATCHING, 2)])
def test_gradients_match_finite_differences(small_net, kind, n_inputs):
    net = small_net(kind, n_inputs)
    rng = np.random.default_rng(7)
    xs = [rng.normal(size=12) for _ in range(n_inputs)]
    weights = rng.normal(size=12 * n_inputs)

    def loss() -> float:
        return float(weights @ forward(net, xs, keep_cache=False))

    forward(net, xs)
    grads = backward(net, xs, weights)
    eps = 1e-6
    for name, param in net.parameters().items():
        flat = param.reshape(-1)
        for index in rng.choice(flat.size, size=min(3, flat.size), replace=False):
            saved = flat[index]
            flat[index] = saved + eps
            up = loss()
            flat[index] = saved - eps
            down = loss()
            flat[index] = saved
            numeric = (up - down) / (2 * eps)
            assert grads[name].reshape(-1)[index] == pytest.approx(numeric, rel=1e-4, abs=1e-7), name


def _relu_pattern(net) -> np.ndarray:
    tape = net._tape
    return np.concatenate(
        [(c.pre_activation > 0).ravel() for block in tape.blocks for c in (block.a, block.b)]
    )


@pytest.mark.parametrize("kind,n_inputs", [(NetKind.LINEARIZATION, 1), (NetKind.MATCHING, 2)])
def test_every_gradient_entry_matches_finite_differences(kind, n_inputs):
    net = build_net(
        NetSpec(kind=kind, n_inputs=n_inputs, base_channels=4, pyramid=[4, 8], rng_seed=5)
    )
    rng = np.random.default_rng(11)
    net.output_layer.weights[...] = rng.uniform(-0.5, 0.5, net.output_layer.weights.shape)
    xs = [rng.normal(size=16) for _ in range(n_inputs)]
    weights = rng.normal(size=16 * n_inputs)

    forward(net, xs)
    grads = backward(net, xs, weights)
    h, checked, kinked = 1e-5, 0, 0
    for name, param in net.parameters().items():
        flat = param.reshape(-1)
        for index in range(flat.size):
            saved = flat[index]
            flat[index] = saved + h
            up = float(weights @ forward(net, xs))
            pattern_up = _relu_pattern(net)
            flat[index] = saved - h
            down = float(weights @ forward(net, xs))
            pattern_down = _relu_pattern(net)
            flat[index] = saved
            if not np.array_equal(pattern_up, pattern_down):
                # a ReLU switched sides inside the step
                kinked += 1
                continue
            numeric = (up - down) / (2 * h)
            analytic = grads[name].reshape(-1)[index]
            assert analytic == pytest.approx(numeric, rel=1e-4, abs=1e-7), (name, index)
            checked += 1
    assert checked == net.parameter_count() - kinked
    assert kinked <= net.parameter_count() // 50


def test_backward_needs_a_matching_forward_cache(small_net):
    net = small_net()
    x = np.linspace(-1.0, 1.0, 16)
    recover(net, [x])
    with pytest.raises(StateError):
        backward(net, [x], np.ones(16))
    forward(net, [x])
    with pytest.raises(StateError):
        backward(net, [x + 1.0], np.ones(16))
    with pytest.raises(ShapeError):
        backward(net, [x], np.ones(15))


@pytest.mark.parametrize("kind,n_inputs", [(NetKind.LINEARIZATION, 1), (NetKind.MATCHING, 2)])
def test_outputs_depend_only_on_the_receptive_field(small_net, kind, n_inputs):
    net = small_net(kind, n_inputs)
    rng = np.random.default_rng(3)
    xs = [rng.normal(size=40) for _ in range(n_inputs)]
    base = recover(net, xs)
    bumped = [x.copy() for x in xs]
    bumped[0][20] += 1.0
    changed = np.nonzero(np.abs(recover(net, bumped) - base) > 1e-12)[0]
    position = 20 * n_inputs
    assert changed.size > 0
    assert np.all(np.abs(changed - position) <= net.receptive_radius())


def test_adam_first_step_moves_by_learning_rate():
    params = {"w": np.array([1.0, -2.0])}
    state = OptimizerState.create(OptimizerKind.ADAM, params, learning_rate=1e-3)
    opt_step(state, params, {"w": np.array([0.5, -3.0])})
    np.testing.assert_allclose(params["w"], [1.0 - 1e-3, -2.0 + 1e-3], rtol=1e-6)
    assert state.step == 1


def test_adagrad_accumulates_squared_gradients():
    params = {"w": np.array([0.0])}
    state = OptimizerState.create(OptimizerKind.ADAGRAD, params, learning_rate=0.1)
    opt_step(state, params, {"w": np.array([2.0])})
    opt_step(state, params, {"w": np.array([2.0])})
    np.testing.assert_allclose(state.second["w"], [8.0])
    np.testing.assert_allclose(params["w"], [-0.1 - 0.2 / np.sqrt(8.0)], rtol=1e-6)


@pytest.mark.parametrize("algorithm", [OptimizerKind.ADAM, OptimizerKind.ADAGRAD])
def test_optimizers_descend_a_quadratic_bowl(algorithm):
    params = {"w": np.array([1.0, -2.0])}
    state = OptimizerState.create(algorithm, params, learning_rate=0.1)
    losses = []
    for _ in range(100):
        losses.append(float(np.sum(params["w"] ** 2)))
        opt_step(state, params, {"w": 2.0 * params["w"]})
    assert float(np.sum(params["w"] ** 2)) < losses[0] / 4
    if algorithm is OptimizerKind.ADAGRAD:
        assert all(b < a for a, b in zip(losses, losses[1:]))


def test_optimizer_rejects_mismatched_gradients():
    params = {"w": np.zeros(3)}
    state = OptimizerState.create("adam", params)
    with pytest.raises(ShapeError):
        opt_step(state, params, {"w": np.zeros(2)})
    with pytest.raises(ShapeError):
        opt_step(state, params, {"v": np.zeros(3)})


@pytest.mark.parametrize("global_skip", [True, False])
def test_checkpoint_restores_structure_and_outputs(small_net, global_skip):
    net = small_net(NetKind.MATCHING, 3, global_skip=global_skip)
    restored = decode_net(encode_net(net))
    assert restored.kind is NetKind.MATCHING
    assert describe(restored) == describe(net)
    xs = [np.sin(np.arange(20) * (m + 1)) for m in range(3)]
    np.testing.assert_array_equal(recover(restored, xs), recover(net, xs))


def test_checkpoint_decode_failures(small_net):
    payload = encode_net(small_net())
    with pytest.raises(FormatError) as bad_magic:
        decode_net(b"NOPE" + payload[4:])
    assert bad_magic.value.offset == 0
    with pytest.raises(FormatError):
        decode_net(payload[:-5])
    with pytest.raises(FormatError):
        decode_net(payload + b"\x00")
