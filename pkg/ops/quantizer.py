"""Scalar quantizers with a learnable clip scale.

Uniform quantization is factored as integer codes times a step:

    codes = round(clamp(x / s, lo, 1) * S)        lo = -1 (signed) or 0 (unsigned)
    value = codes * (s / S)

`round` breaks ties away from zero. The packer stores the codes and
reuses `dequantize`, so a decoded package matches `quantize` bit for bit.
Gradients follow the straight-through estimator; the clip scale gets the
PACT boundary gradient.
"""

from functools import lru_cache
import logging
import numpy as np

from exc.exceptions import NonFiniteInputError, QuantizerError, ShapeError, UnsupportedBitsError
from ops.tensor import Tensor
from schemas.schemas_quantizer import QuantMode, QuantizerSpec

logger: logging.Logger = logging.getLogger(__name__)


def _check_finite(x: Tensor) -> None:
    if not np.all(np.isfinite(x)):
        bad = int(np.size(x) - np.count_nonzero(np.isfinite(x)))
        raise NonFiniteInputError(
            f"{bad} non-finite element(s) in quantizer input",
            hint="A NaN or Inf upstream usually means the learning rate is too high.",
        )


def _as_float(x: Tensor) -> Tensor:
    arr = np.asarray(x)
    return arr if np.issubdtype(arr.dtype, np.floating) else arr.astype(np.float32)


def round_half_away(v: np.ndarray) -> np.ndarray:
    return np.sign(v) * np.floor(np.abs(v) + 0.5)


def init_scale(x: Tensor, spec: QuantizerSpec) -> QuantizerSpec:
    """Returns `spec` with s = max|x| if it has no scale yet."""
    if spec.scale is not None:
        return spec
    peak = float(np.max(np.abs(x))) if np.size(x) else 0.0
    if peak == 0.0:
        peak = 1.0
    scaled = spec.with_scale(max(peak, float(np.finfo(np.float32).tiny)))
    logger.debug(f"Initialised {spec.mode} {spec.bits}-bit scale to {scaled.scale!r}")
    return scaled


def _scale(x: Tensor, spec: QuantizerSpec) -> np.floating:
    if spec.scale is None:
        raise QuantizerError("quantizer scale is not initialised", hint="Call init_scale first.")
    return x.dtype.type(spec.scale)


def _lower(spec: QuantizerSpec) -> int:
    return 0 if spec.mode is QuantMode.UNSIGNED else -1


# --------------------------------------------------------------------------


def quantize_codes(x: Tensor, spec: QuantizerSpec) -> np.ndarray:
    """Integer codes in [-S, S] (signed) or [0, S] (unsigned)."""
    if spec.mode is QuantMode.APOT or spec.is_identity:
        raise QuantizerError(f"no integer codes for a {spec.bits}-bit {spec.mode} quantizer")
    x = _as_float(x)
    _check_finite(x)
    s = _scale(x, spec)
    u = np.clip(x / s, _lower(spec), 1) * x.dtype.type(spec.levels)
    return round_half_away(u).astype(np.int64)


def dequantize(codes: np.ndarray, spec: QuantizerSpec, dtype: type[np.floating] = np.float32) -> Tensor:
    if spec.scale is None:
        raise QuantizerError("quantizer scale is not initialised")
    step = dtype(spec.scale / spec.levels)
    return np.asarray(codes).astype(dtype) * step


def quantize(x: Tensor, spec: QuantizerSpec, rounding: bool = True) -> Tensor:
    """Quantizes `x`; `rounding=False` evaluates the clamp surrogate instead."""
    x = _as_float(x)
    _check_finite(x)
    if spec.is_identity:
        return x.copy()
    spec = init_scale(x, spec)
    if not rounding:
        s = _scale(x, spec)
        return np.clip(x, _lower(spec) * s, s)
    if spec.mode is QuantMode.APOT:
        return quantize_apot(x, spec)
    return dequantize(quantize_codes(x, spec), spec, x.dtype.type)


def quantize_backward(x: Tensor, upstream: Tensor, spec: QuantizerSpec) -> tuple[Tensor, float]:
    """STE gradient w.r.t. the input and PACT gradient w.r.t. the clip scale."""
    x, upstream = _as_float(x), np.asarray(upstream)
    if x.shape != upstream.shape:
        raise ShapeError(f"gradient shape {upstream.shape} does not match input {x.shape}")
    if spec.is_identity:
        return upstream.copy(), 0.0
    s = _scale(x, spec)
    if spec.mode is QuantMode.UNSIGNED:
        inside = (x >= 0) & (x <= s)
        above = x > s
        grad_s = float(np.sum(upstream[above], dtype=np.float64))
    else:
        inside = np.abs(x) <= s
        grad_s = float(np.sum((upstream * np.sign(x))[~inside], dtype=np.float64))
    return upstream * inside.astype(upstream.dtype), grad_s


# --------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _apot_levels(bits: int) -> tuple[float, ...]:
    if bits == 3:
        magnitudes = {0.0, 1.0, 2.0**-1, 2.0**-2}
    elif bits == 4:
        magnitudes = {p1 + p2 for p1 in (0.0, 1.0, 2.0**-2, 2.0**-4) for p2 in (0.0, 2.0**-1)}
    else:
        raise UnsupportedBitsError(
            f"apot supports 3 or 4 bits, got {bits}", hint="Use the uniform quantizer."
        )
    peak = max(magnitudes)
    positive = sorted(m / peak for m in magnitudes)
    return tuple([-m for m in reversed(positive[1:])] + positive)


def apot_levels(bits: int) -> np.ndarray:
    """Sorted signed codebook of 2^bits - 1 levels in [-1, 1]."""
    return np.array(_apot_levels(bits), dtype=np.float64)


def quantize_apot(x: Tensor, spec: QuantizerSpec) -> Tensor:
    """Projects x / s onto the nearest codebook level; ties go to the smaller magnitude."""
    if spec.mode is not QuantMode.APOT:
        raise QuantizerError(f"quantize_apot needs an apot spec, got {spec.mode}")
    x = _as_float(x)
    _check_finite(x)
    spec = init_scale(x, spec)
    levels = apot_levels(spec.bits).astype(x.dtype)
    s = _scale(x, spec)
    u = np.clip(x / s, -1, 1)
    idx = np.clip(np.searchsorted(levels, u), 1, levels.shape[0] - 1)
    below, above = levels[idx - 1], levels[idx]
    d_below, d_above = u - below, above - u
    smaller = np.where(np.abs(below) <= np.abs(above), below, above)
    nearest = np.where(d_below < d_above, below, np.where(d_above < d_below, above, smaller))
    return nearest * s
