import logging
import numpy as np
import pytest

from exc.exceptions import ContractViolationError, FormatError, ShapeError
from nn.data import Dataset
from nn.layers import layer_forward, maxpool2, maxpool2_backward
from nn.network import (
    Network,
    backward_quantized,
    build_network,
    evaluate,
    forward_quantized,
    named_parameters,
    assign_parameter,
    network_from_tensors,
    network_to_tensors,
    softmax_cross_entropy,
)
from ops.mwq import mwq_quantize, weight_view
from ops.quantizer import quantize
from ops.tensor import conv2d
from schemas.schemas_mwq import MwqConfig
from schemas.schemas_network import NetworkConfig
from schemas.schemas_quantizer import QuantizerSpec


def tiny_config(**overrides) -> NetworkConfig:
    return NetworkConfig(conv_channels=(4, 8), hidden=16, **overrides)


def float_forward(x: np.ndarray, net: Network) -> np.ndarray:
    conv1, conv2, fc1, fc2 = net.layers
    a = np.maximum(conv2d(x, conv1.weight, pad=1) + conv1.bias[None, :, None, None], 0)
    a, _ = maxpool2(a)
    a = np.maximum(conv2d(a, conv2.weight, pad=1) + conv2.bias[None, :, None, None], 0)
    a, _ = maxpool2(a)
    a = np.maximum(a.reshape(a.shape[0], -1) @ fc1.weight.T + fc1.bias, 0)
    return a @ fc2.weight.T + fc2.bias


def shrink_scales(net: Network, factor: float = 0.8) -> None:
    # Pulls every clip scale off the extreme value it was initialised to
    for name, value in named_parameters(net).items():
        if ".wscale" in name or name.endswith(".ascale"):
            assign_parameter(net, name, value * factor)


def finite_difference(net: Network, name: str, index: tuple[int, ...], x: np.ndarray, labels: np.ndarray) -> float:
    base = named_parameters(net)[name].copy()
    # Scales are stored at float32 precision, so probe them with a wider step
    eps = 1e-4 if base.ndim == 0 else 1e-6

    def loss_at(delta: float) -> tuple[float, float]:
        value = base.copy()
        value[index] += delta
        assign_parameter(net, name, value)
        logits, _ = forward_quantized(x, net, rounding=False)
        loss, _ = softmax_cross_entropy(logits, labels)
        return loss, float(named_parameters(net)[name][index])

    (up, at_up), (down, at_down) = loss_at(eps), loss_at(-eps)
    assign_parameter(net, name, base)
    return (up - down) / (at_up - at_down)


# --------------------------------------------------------------------------


def test_quantizers_follow_the_config(caplog: pytest.LogCaptureFixture):
    net = build_network(tiny_config(weight_quantizer="mwq", wbits=4, abits=4))
    conv1, conv2, fc1, fc2 = net.layers
    assert isinstance(conv1.weight_quantizer, QuantizerSpec) and conv1.weight_quantizer.bits == 8
    assert isinstance(conv2.weight_quantizer, MwqConfig)
    assert isinstance(fc1.weight_quantizer, MwqConfig)
    assert isinstance(fc2.weight_quantizer, QuantizerSpec) and fc2.weight_quantizer.bits == 8
    assert conv1.act_quantizer is not None and conv1.act_quantizer.bits == 8
    assert conv2.act_quantizer is not None and conv2.act_quantizer.bits == 4

    with caplog.at_level(logging.WARNING):
        fallback = build_network(tiny_config(weight_quantizer="mwq", levels=3))
    assert isinstance(fallback.layer("conv2").weight_quantizer, QuantizerSpec)
    assert "falling back" in caplog.text

    plain = build_network(tiny_config())
    assert all(layer.weight_quantizer is None and layer.act_quantizer is None for layer in plain.layers)


def test_unquantized_forward_is_a_plain_float_pass(rng: np.random.Generator):
    net = build_network(tiny_config(), seed=1)
    x = rng.uniform(size=(3, 1, 16, 16)).astype(np.float32)
    logits, _ = forward_quantized(x, net)
    np.testing.assert_allclose(logits, float_forward(x, net), rtol=1e-5, atol=1e-6)
    zero, _ = forward_quantized(np.zeros_like(x), net)
    np.testing.assert_array_equal(zero, np.zeros_like(zero))


def test_mwq_layer_matches_manual_composition(rng: np.random.Generator):
    net = build_network(tiny_config(weight_quantizer="mwq", wbits=4, abits=4), seed=2)
    conv2 = net.layer("conv2")
    x = rng.uniform(size=(2, 4, 8, 8)).astype(np.float32)
    z, _ = layer_forward(conv2, x)
    assert isinstance(conv2.weight_quantizer, MwqConfig)
    wq = mwq_quantize(weight_view(conv2.weight), conv2.weight_quantizer).xq.reshape(conv2.weight.shape)
    assert conv2.act_quantizer is not None
    xq = quantize(x, conv2.act_quantizer)
    np.testing.assert_array_equal(z, conv2d(xq, wq, pad=1) + conv2.bias[None, :, None, None])


def test_input_shape_is_checked():
    with pytest.raises(ShapeError):
        forward_quantized(np.zeros((1, 1, 8, 8), dtype=np.float32), build_network(tiny_config()))


def test_softmax_cross_entropy():
    loss, grad = softmax_cross_entropy(np.zeros((2, 4)), np.array([1, 3]))
    assert loss == pytest.approx(np.log(4.0))
    np.testing.assert_allclose(grad.sum(axis=1), [0.0, 0.0], atol=1e-12)
    with pytest.raises(ShapeError):
        softmax_cross_entropy(np.zeros((2, 4)), np.array([1, 4]))


def test_maxpool_routes_gradients_to_the_first_maximum():
    x = np.array([[[[1.0, 1.0], [0.0, 1.0]]]])
    pooled, idx = maxpool2(x)
    assert pooled[0, 0, 0, 0] == 1.0
    grad = maxpool2_backward(idx, np.ones((1, 1, 1, 1)))
    np.testing.assert_array_equal(grad, [[[[1.0, 0.0], [0.0, 0.0]]]])


# --------------------------------------------------------------------------

PROBES = [
    ("conv1.weight", (0, 0, 1, 1)),
    ("conv1.bias", (2,)),
    ("conv2.weight", (1, 2, 0, 2)),
    ("conv2.weight", (7, 3, 2, 1)),
    ("conv2.bias", (5,)),
    ("fc1.weight", (3, 17)),
    ("fc1.weight", (10, 100)),
    ("fc1.bias", (4,)),
    ("fc2.weight", (2, 9)),
    ("fc2.bias", (0,)),
]


@pytest.mark.parametrize(
    "overrides",
    [
        {},
        {"weight_quantizer": "mwq", "wbits": 4, "basis": "db2"},
        {"weight_quantizer": "uniform", "wbits": 4, "abits": 4},
        {"weight_quantizer": "mwq", "wbits": 4, "abits": 4, "enhance": True},
    ],
    ids=["float", "mwq", "uniform", "mwq-enhance"],
)
def test_gradients_match_finite_differences(tiny_data: Dataset, overrides: dict):
    net = build_network(tiny_config(**overrides), seed=5, dtype=np.float64)
    # Strictly positive pixels keep pre-activations off the ReLU kink
    x = 0.05 + 0.9 * tiny_data.train.images[:6].astype(np.float64)
    labels = tiny_data.train.labels[:6]
    forward_quantized(x, net, rounding=False)
    shrink_scales(net)
    logits, cache = forward_quantized(x, net, rounding=False)
    _, grad_logits = softmax_cross_entropy(logits, labels)
    grads = backward_quantized(cache, grad_logits)

    probes = list(PROBES)
    probes += [(name, ()) for name in named_parameters(net) if ".wscale" in name or name.endswith((".ascale", ".alpha"))][:3]
    for name, index in probes:
        numeric = finite_difference(net, name, index, x, labels)
        assert grads[name][index] == pytest.approx(numeric, rel=1e-3, abs=1e-6), name


def test_zero_upstream_gives_zero_gradients(tiny_data: Dataset):
    net = build_network(tiny_config(weight_quantizer="mwq", wbits=4, abits=4), seed=0)
    logits, cache = forward_quantized(tiny_data.train.images[:4], net)
    grads = backward_quantized(cache, np.zeros_like(logits))
    assert all(not np.any(g) for g in grads.values())


def test_stale_cache_is_rejected(tiny_data: Dataset):
    net = build_network(tiny_config(), seed=0)
    logits, cache = forward_quantized(tiny_data.train.images[:4], net)
    net.touch()
    with pytest.raises(ContractViolationError):
        backward_quantized(cache, np.ones_like(logits))


# --------------------------------------------------------------------------


def test_checkpoint_tensors_round_trip(tiny_data: Dataset):
    cfg = tiny_config(weight_quantizer="mwq", wbits=4, abits=4, enhance=True)
    net = build_network(cfg, seed=4)
    forward_quantized(tiny_data.train.images[:4], net)
    tensors = network_to_tensors(net)
    assert "conv2.wscale.ll1" in tensors and "conv1.wscale" in tensors
    assert tensors["enhance1.alpha"].shape == (1,)
    restored = network_from_tensors(cfg, tensors)
    for name, value in named_parameters(restored).items():
        np.testing.assert_array_equal(np.asarray(value, dtype=np.float32).reshape(-1), tensors[name].reshape(-1))
    a, _ = forward_quantized(tiny_data.test.images, net)
    b, _ = forward_quantized(tiny_data.test.images, restored)
    np.testing.assert_array_equal(a, b)


def test_checkpoint_must_fit_the_network(tiny_data: Dataset):
    tensors = network_to_tensors(build_network(tiny_config(), seed=0))
    with pytest.raises(FormatError):
        network_from_tensors(tiny_config(hidden=8), tensors)
    with pytest.raises(FormatError):
        network_from_tensors(tiny_config(), {k: v for k, v in tensors.items() if k != "fc1.bias"})
    with pytest.raises(FormatError):
        network_from_tensors(tiny_config(), {**tensors, "fc1.ascale": np.ones(1, dtype=np.float32)})


def test_threaded_evaluation_agrees(tiny_data: Dataset):
    net = build_network(tiny_config(weight_quantizer="uniform", wbits=4, abits=4), seed=0)
    acc1, loss1 = evaluate(net, tiny_data.test, batch_size=5, threads=1)
    acc4, loss4 = evaluate(net, tiny_data.test, batch_size=5, threads=4)
    assert acc1 == acc4
    assert loss1 == pytest.approx(loss4, rel=1e-9)
    assert 0.0 <= acc1 <= 1.0
