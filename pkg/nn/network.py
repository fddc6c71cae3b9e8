"""The toy CNN: conv3x3-ReLU-[enhance]-pool, conv3x3-ReLU-pool, fc-ReLU, fc.

Parameters are addressed by dotted names that double as checkpoint tensor
names: `<layer>.weight`, `<layer>.bias`, `<layer>.wscale`,
`<layer>.wscale.<subband>`, `<layer>.ascale` and `enhance1.alpha`.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping
import logging
import math
import numpy as np

from exc.exceptions import FormatError, ShapeError
from nn.data import Split
from nn.layers import (
    Gradients,
    LayerCache,
    LayerParams,
    WeightQuantizer,
    layer_backward,
    layer_forward,
    maxpool2,
    maxpool2_backward,
    relu,
    relu_backward,
)
from ops.enhance import EnhanceCache, EnhanceLayer, enhance_backward, enhance_forward
from ops.tensor import Tensor
from ops.wavelet import supports_shape
from schemas.schemas_mwq import MwqConfig
from schemas.schemas_network import NetworkConfig
from schemas.schemas_quantizer import QuantizerSpec, QuantMode, as_float32

logger: logging.Logger = logging.getLogger(__name__)

LAYER_NAMES: tuple[str, ...] = ("conv1", "conv2", "fc1", "fc2")
ENHANCE_NAME: str = "enhance1"
MIN_SCALE: float = 1e-8


@dataclass
class Network:
    config: NetworkConfig
    layers: list[LayerParams]
    enhancer: EnhanceLayer | None = None

    def layer(self, name: str) -> LayerParams:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise KeyError(name)

    def touch(self) -> None:
        """Marks every parameter as updated; older forward caches become stale."""
        for layer in self.layers:
            layer.generation += 1


@dataclass(frozen=True)
class NetworkCache:
    layers: tuple[LayerCache, ...]
    pre_activations: tuple[Tensor, ...]
    pool_indices: tuple[np.ndarray, ...]
    flat_shape: tuple[int, ...]
    enhance: EnhanceCache | None = None


# --------------------------------------------------------------------------


def _weight_quantizer(cfg: NetworkConfig, name: str, view: tuple[int, int], edge: bool) -> WeightQuantizer:
    if cfg.weight_quantizer == "none":
        return None
    if edge:
        return QuantizerSpec(bits=cfg.edge_bits)
    if cfg.weight_quantizer == "apot":
        return QuantizerSpec(bits=cfg.wbits, mode=QuantMode.APOT)
    if cfg.weight_quantizer == "mwq":
        if supports_shape(view, cfg.basis, cfg.levels):
            return MwqConfig(levels=cfg.levels, bits=cfg.subband_bits, basis=cfg.basis)
        logger.warning(
            f"{name}: weight view {view} does not fit {cfg.basis} at J={cfg.levels}, "
            f"falling back to spatial {cfg.wbits}-bit quantization"
        )
    return QuantizerSpec(bits=cfg.wbits)


def _act_quantizer(cfg: NetworkConfig, edge: bool) -> QuantizerSpec | None:
    if not cfg.quantizes_activations:
        return None
    return QuantizerSpec(bits=cfg.edge_bits if edge else cfg.abits, mode=QuantMode.UNSIGNED)


def build_network(cfg: NetworkConfig, seed: int = 0, dtype: type[np.floating] = np.float32) -> Network:
    """He-initialised weights, zero biases, quantizers chosen by `cfg`."""
    rng = np.random.default_rng(seed)
    c1, c2 = cfg.conv_channels
    flat = c2 * (cfg.image_size // 4) ** 2
    shapes = {
        "conv1": (c1, 1, 3, 3),
        "conv2": (c2, c1, 3, 3),
        "fc1": (cfg.hidden, flat),
        "fc2": (cfg.num_classes, cfg.hidden),
    }
    layers: list[LayerParams] = []
    for name, shape in shapes.items():
        fan_in = math.prod(shape[1:])
        weight = rng.normal(0.0, math.sqrt(2.0 / fan_in), size=shape).astype(dtype)
        edge = name in ("conv1", "fc2")
        layers.append(
            LayerParams(
                name=name,
                kind="conv" if name.startswith("conv") else "fc",
                weight=weight,
                bias=np.zeros(shape[0], dtype=dtype),
                weight_quantizer=_weight_quantizer(cfg, name, (shape[0], fan_in), edge),
                act_quantizer=_act_quantizer(cfg, edge=name == "conv1"),
                pad=1 if name.startswith("conv") else 0,
            )
        )
    enhancer = None
    if cfg.enhance:
        enhancer = EnhanceLayer(basis=cfg.enhance_basis, levels=cfg.enhance_levels, alpha=cfg.enhance_alpha)
    return Network(config=cfg, layers=layers, enhancer=enhancer)


# --------------------------------------------------------------------------


def forward_quantized(x: Tensor, net: Network, rounding: bool = True) -> tuple[Tensor, NetworkCache]:
    size = net.config.image_size
    if x.ndim != 4 or x.shape[1:] != (1, size, size):
        raise ShapeError(f"network expects [N, 1, {size}, {size}] input, got {x.shape}")
    conv1, conv2, fc1, fc2 = net.layers
    z1, c1 = layer_forward(conv1, x, rounding)
    a1 = relu(z1)
    enhance_cache = None
    if net.enhancer is not None:
        a1, enhance_cache = enhance_forward(a1, net.enhancer)
    p1, i1 = maxpool2(a1)
    z2, c2 = layer_forward(conv2, p1, rounding)
    p2, i2 = maxpool2(relu(z2))
    z3, c3 = layer_forward(fc1, p2.reshape(p2.shape[0], -1), rounding)
    logits, c4 = layer_forward(fc2, relu(z3), rounding)
    cache = NetworkCache(
        layers=(c1, c2, c3, c4),
        pre_activations=(z1, z2, z3),
        pool_indices=(i1, i2),
        flat_shape=p2.shape,
        enhance=enhance_cache,
    )
    return logits, cache


def backward_quantized(cache: NetworkCache, grad_logits: Tensor) -> Gradients:
    c1, c2, c3, c4 = cache.layers
    z1, z2, z3 = cache.pre_activations
    i1, i2 = cache.pool_indices
    grads: Gradients = {}

    g, layer_grads = layer_backward(c4, grad_logits)
    grads.update(layer_grads)
    g, layer_grads = layer_backward(c3, relu_backward(z3, g))
    grads.update(layer_grads)
    g = relu_backward(z2, maxpool2_backward(i2, g.reshape(cache.flat_shape)))
    g, layer_grads = layer_backward(c2, g)
    grads.update(layer_grads)
    g = maxpool2_backward(i1, g)
    if cache.enhance is not None:
        g, grad_alpha = enhance_backward(cache.enhance, g)
        grads[f"{ENHANCE_NAME}.alpha"] = np.asarray(grad_alpha, dtype=np.float64)
    _, layer_grads = layer_backward(c1, relu_backward(z1, g))
    grads.update(layer_grads)
    return grads


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> tuple[float, Tensor]:
    """Mean loss and its gradient w.r.t. the logits."""
    n, classes = logits.shape
    if labels.shape != (n,) or labels.min(initial=0) < 0 or labels.max(initial=0) >= classes:
        raise ShapeError(f"labels {labels.shape} do not fit logits {logits.shape}")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    rows = np.arange(n)
    loss = -float(np.mean(log_probs[rows, labels], dtype=np.float64))
    grad = np.exp(log_probs)
    grad[rows, labels] -= 1
    return loss, grad / logits.dtype.type(n)


# --------------------------------------------------------------------------


def _batch_stats(net: Network, images: Tensor, labels: np.ndarray) -> tuple[int, float]:
    logits, _ = forward_quantized(images, net)
    loss, _ = softmax_cross_entropy(logits, labels)
    return int(np.sum(logits.argmax(axis=1) == labels)), loss * labels.shape[0]


def evaluate(net: Network, split: Split, batch_size: int = 256, threads: int = 1) -> tuple[float, float]:
    """Accuracy and mean loss over `split`.

    With `threads > 1` batches run concurrently; results then no longer
    depend on a fixed accumulation order.
    """
    if len(split) == 0:
        raise ShapeError("cannot evaluate on an empty split")
    bounds = [(i, min(i + batch_size, len(split))) for i in range(0, len(split), batch_size)]
    # Scales still unset are initialised by the first batch, before any thread starts
    first = _batch_stats(net, split.images[: bounds[0][1]], split.labels[: bounds[0][1]])
    rest = bounds[1:]
    if threads > 1 and rest:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            stats = list(
                pool.map(lambda b: _batch_stats(net, split.images[b[0] : b[1]], split.labels[b[0] : b[1]]), rest)
            )
    else:
        stats = [_batch_stats(net, split.images[a:b], split.labels[a:b]) for a, b in rest]
    correct = first[0] + sum(s[0] for s in stats)
    loss = first[1] + sum(s[1] for s in stats)
    return correct / len(split), loss / len(split)


# --------------------------------------------------------------------------


def named_parameters(net: Network) -> dict[str, np.ndarray]:
    """Every learnable value; scalars are 0-d float64 arrays."""
    params: dict[str, np.ndarray] = {}
    for layer in net.layers:
        params[f"{layer.name}.weight"] = layer.weight
        params[f"{layer.name}.bias"] = layer.bias
        q = layer.weight_quantizer
        if isinstance(q, MwqConfig):
            for sid, s in q.scales.items():
                params[f"{layer.name}.wscale.{sid}"] = np.asarray(s, dtype=np.float64)
        elif isinstance(q, QuantizerSpec) and q.scale is not None and not q.is_identity:
            params[f"{layer.name}.wscale"] = np.asarray(q.scale, dtype=np.float64)
        a = layer.act_quantizer
        if a is not None and a.scale is not None and not a.is_identity:
            params[f"{layer.name}.ascale"] = np.asarray(a.scale, dtype=np.float64)
    if net.enhancer is not None:
        params[f"{ENHANCE_NAME}.alpha"] = np.asarray(net.enhancer.alpha, dtype=np.float64)
    return params


def _scale_value(value: np.ndarray) -> float:
    return as_float32(max(float(value), MIN_SCALE))


def assign_parameter(net: Network, name: str, value: np.ndarray) -> None:
    """Sets one named parameter; raises KeyError if `net` has no such parameter."""
    owner, _, attr = name.partition(".")
    if owner == ENHANCE_NAME:
        if net.enhancer is None or attr != "alpha":
            raise KeyError(name)
        net.enhancer.alpha = float(value)
        return
    layer = net.layer(owner)
    if attr in ("weight", "bias"):
        current = getattr(layer, attr)
        if np.shape(value) != current.shape:
            raise ShapeError(f"{name}: expected shape {current.shape}, got {np.shape(value)}")
        setattr(layer, attr, np.asarray(value, dtype=current.dtype))
    elif attr == "ascale" and layer.act_quantizer is not None:
        layer.act_quantizer = layer.act_quantizer.with_scale(_scale_value(value))
    elif attr == "wscale" and isinstance(layer.weight_quantizer, QuantizerSpec):
        layer.weight_quantizer = layer.weight_quantizer.with_scale(_scale_value(value))
    elif attr.startswith("wscale.") and isinstance(layer.weight_quantizer, MwqConfig):
        sid = attr.removeprefix("wscale.")
        if sid not in layer.weight_quantizer.subband_ids():
            raise KeyError(name)
        scales = {**layer.weight_quantizer.scales, sid: _scale_value(value)}
        layer.weight_quantizer = layer.weight_quantizer.with_scales(scales)
    else:
        raise KeyError(name)


def network_to_tensors(net: Network) -> dict[str, np.ndarray]:
    return {
        name: np.asarray(value, dtype=np.float32).reshape(value.shape or (1,))
        for name, value in named_parameters(net).items()
    }


def network_from_tensors(cfg: NetworkConfig, tensors: Mapping[str, np.ndarray]) -> Network:
    """Rebuilds a network from checkpoint tensors; scales absent from the
    checkpoint initialise at first use."""
    net = build_network(cfg)
    required = {f"{layer}.{attr}" for layer in LAYER_NAMES for attr in ("weight", "bias")}
    missing = sorted(required - set(tensors))
    if missing:
        raise FormatError(f"checkpoint lacks {', '.join(missing)}")
    for name, value in tensors.items():
        value = np.asarray(value)
        if not name.endswith((".weight", ".bias")):
            value = value.reshape(())
        try:
            assign_parameter(net, name, value)
        except (KeyError, ShapeError) as e:
            raise FormatError(
                f"checkpoint tensor {name!r} does not fit this network: {e}",
                hint="Pass the quantizer flags the checkpoint was trained with.",
            ) from e
    return net
