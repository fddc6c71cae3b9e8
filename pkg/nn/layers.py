"""Quantized conv / fc layers with explicit backward passes.

A layer computes z = F(Qa(x), Qw(W)) + b, where Qa quantizes the input
activation and Qw the weight (spatially or through MWQ). Clip scales start
unset and are initialised from the first tensor they see.
"""

from dataclasses import dataclass
from typing import Literal, TypeAlias
import logging
import numpy as np

from exc.exceptions import ContractViolationError, ShapeError
from ops.mwq import MwqResult, mwq_backward, mwq_quantize, weight_view
from ops.quantizer import init_scale, quantize, quantize_backward
from ops.tensor import Tensor, conv2d, conv2d_backward
from schemas.schemas_mwq import MwqConfig
from schemas.schemas_quantizer import QuantizerSpec

logger: logging.Logger = logging.getLogger(__name__)

WeightQuantizer: TypeAlias = MwqConfig | QuantizerSpec | None
Gradients: TypeAlias = dict[str, np.ndarray]


@dataclass
class LayerParams:
    name: str
    kind: Literal["conv", "fc"]
    weight: Tensor
    bias: Tensor
    weight_quantizer: WeightQuantizer = None
    act_quantizer: QuantizerSpec | None = None
    pad: int = 0
    # Bumped by every optimizer update; forward caches remember it
    generation: int = 0

    def __post_init__(self) -> None:
        ndim = 4 if self.kind == "conv" else 2
        if self.weight.ndim != ndim or self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(
                f"{self.name}: {self.kind} layer with weight {self.weight.shape} and bias {self.bias.shape}"
            )


@dataclass(frozen=True)
class WeightCache:
    wq: Tensor
    spec: QuantizerSpec | None = None
    mwq: MwqResult | None = None


@dataclass(frozen=True)
class LayerCache:
    layer: LayerParams
    generation: int
    x: Tensor
    xq: Tensor
    act_spec: QuantizerSpec | None
    weight: WeightCache


# --------------------------------------------------------------------------


def quantize_weight(layer: LayerParams, rounding: bool = True) -> WeightCache:
    q = layer.weight_quantizer
    if q is None:
        return WeightCache(wq=layer.weight)
    if isinstance(q, MwqConfig):
        result = mwq_quantize(weight_view(layer.weight), q, rounding)
        layer.weight_quantizer = result.config
        return WeightCache(wq=result.xq.reshape(layer.weight.shape), mwq=result)
    spec = init_scale(layer.weight, q)
    layer.weight_quantizer = spec
    return WeightCache(wq=quantize(layer.weight, spec, rounding), spec=spec)


def weight_backward(
    layer: LayerParams, cache: WeightCache, grad_wq: Tensor
) -> tuple[Tensor, dict[str, float]]:
    """Gradient w.r.t. the float weight and every weight clip scale."""
    if cache.mwq is not None:
        grad_w, grad_scales = mwq_backward(cache.mwq, weight_view(grad_wq))
        return grad_w.reshape(layer.weight.shape), {
            f"wscale.{sid}": g for sid, g in grad_scales.items()
        }
    if cache.spec is not None:
        grad_w, grad_s = quantize_backward(layer.weight, grad_wq, cache.spec)
        return grad_w, {} if cache.spec.is_identity else {"wscale": grad_s}
    return grad_wq, {}


def quantize_activation(
    layer: LayerParams, x: Tensor, rounding: bool = True
) -> tuple[Tensor, QuantizerSpec | None]:
    if layer.act_quantizer is None:
        return x, None
    spec = init_scale(x, layer.act_quantizer)
    layer.act_quantizer = spec
    return quantize(x, spec, rounding), spec


# --------------------------------------------------------------------------


def layer_forward(
    layer: LayerParams, x: Tensor, rounding: bool = True
) -> tuple[Tensor, LayerCache]:
    xq, act_spec = quantize_activation(layer, x, rounding)
    wc = quantize_weight(layer, rounding)
    if layer.kind == "conv":
        z = conv2d(xq, wc.wq, stride=1, pad=layer.pad) + layer.bias[None, :, None, None]
    else:
        if xq.ndim != 2 or xq.shape[1] != wc.wq.shape[1]:
            raise ShapeError(f"{layer.name}: input {xq.shape} against weight {wc.wq.shape}")
        z = xq @ wc.wq.T + layer.bias
    cache = LayerCache(
        layer=layer, generation=layer.generation, x=x, xq=xq, act_spec=act_spec, weight=wc
    )
    return z, cache


def layer_backward(cache: LayerCache, grad_z: Tensor) -> tuple[Tensor, Gradients]:
    layer = cache.layer
    if layer.generation != cache.generation:
        raise ContractViolationError(
            f"{layer.name}: forward cache is from generation {cache.generation}, "
            f"parameters are at {layer.generation}",
            hint="Run a fresh forward pass after every optimizer update.",
        )
    wq = cache.weight.wq
    if layer.kind == "conv":
        grad_xq, grad_wq = conv2d_backward(cache.xq, wq, grad_z, stride=1, pad=layer.pad)
        grad_b = grad_z.sum(axis=(0, 2, 3))
    else:
        grad_wq = grad_z.T @ cache.xq
        grad_xq = grad_z @ wq
        grad_b = grad_z.sum(axis=0)
    grad_w, weight_scales = weight_backward(layer, cache.weight, grad_wq)
    grads: Gradients = {
        f"{layer.name}.weight": grad_w,
        f"{layer.name}.bias": grad_b,
    }
    for key, g in weight_scales.items():
        grads[f"{layer.name}.{key}"] = np.asarray(g, dtype=np.float64)
    if cache.act_spec is not None:
        grad_x, grad_s = quantize_backward(cache.x, grad_xq, cache.act_spec)
        if not cache.act_spec.is_identity:
            grads[f"{layer.name}.ascale"] = np.asarray(grad_s, dtype=np.float64)
    else:
        grad_x = grad_xq
    return grad_x, grads


# --------------------------------------------------------------------------


def relu(x: Tensor) -> Tensor:
    return np.maximum(x, 0)


def relu_backward(z: Tensor, upstream: Tensor) -> Tensor:
    return upstream * (z > 0)


def _blocks(x: Tensor) -> Tensor:
    n, c, h, w = x.shape
    return x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(
        n, c, h // 2, w // 2, 4
    )


def maxpool2(x: Tensor) -> tuple[Tensor, np.ndarray]:
    """2x2 max pooling, stride 2; on ties the first element in row-major order wins."""
    if x.ndim != 4 or x.shape[2] % 2 or x.shape[3] % 2:
        raise ShapeError(f"maxpool2 needs [N, C, even H, even W], got {x.shape}")
    blocks = _blocks(x)
    idx = blocks.argmax(axis=-1)
    return np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0], idx


def maxpool2_backward(idx: np.ndarray, upstream: Tensor) -> Tensor:
    n, c, h2, w2 = upstream.shape
    grad = np.zeros((n, c, h2, w2, 4), dtype=upstream.dtype)
    np.put_along_axis(grad, idx[..., None], upstream[..., None], axis=-1)
    return grad.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(
        n, c, 2 * h2, 2 * w2
    )
