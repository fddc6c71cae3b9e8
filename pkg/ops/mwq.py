"""Multiscale wavelet quantization: decompose, quantize every subband, reconstruct."""

from dataclasses import dataclass
import logging
import numpy as np

from exc.exceptions import ShapeError
from ops.quantizer import init_scale, quantize, quantize_backward
from ops.tensor import Tensor
from ops.wavelet import (
    SubbandSet,
    WaveletBasis,
    resolve_basis,
    wavedec2,
    wavedec2_adjoint,
    waverec2,
    waverec2_adjoint,
)
from schemas.schemas_mwq import MwqConfig, parse_subband_id
from schemas.schemas_quantizer import QuantizerSpec

logger: logging.Logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MwqResult:
    xq: Tensor
    subbands: SubbandSet  # quantized, what gets stored
    coefficients: SubbandSet  # unquantized, what backward needs
    config: MwqConfig  # every scale initialised


def weight_view(w: Tensor) -> Tensor:
    """2D view [shape[0], prod(shape[1:])] under which weights are decomposed."""
    w = np.asarray(w)
    if w.ndim < 2:
        raise ShapeError(f"weights need at least 2 dims, got shape {w.shape}")
    return w.reshape(w.shape[0], -1)


def subband_spec(cfg: MwqConfig, sid: str) -> QuantizerSpec:
    _, orientation = parse_subband_id(sid)
    return QuantizerSpec(bits=cfg.bits_for(orientation), scale=cfg.scales.get(sid))


def _fill_scales(coefficients: SubbandSet, cfg: MwqConfig) -> MwqConfig:
    missing = [sid for sid, *_ in coefficients.bands() if sid not in cfg.scales]
    if not missing:
        return cfg
    scales = dict(cfg.scales)
    for sid, _, _, band in coefficients.bands():
        if sid in missing:
            scales[sid] = init_scale(band, subband_spec(cfg, sid)).scale  # type: ignore[assignment]
    return cfg.with_scales(scales)


def init_subband_scales(x: Tensor, cfg: MwqConfig) -> MwqConfig:
    """Fills every missing subband scale with max|subband| of `x`."""
    return _fill_scales(wavedec2(x, cfg.basis, cfg.levels), cfg)


def mwq_quantize(x: Tensor, cfg: MwqConfig, rounding: bool = True) -> MwqResult:
    """Quantizes `x` over its last two axes in the wavelet domain.

    `rounding=False` clamps every subband without rounding (the surrogate
    whose exact gradient the backward pass computes).
    """
    coefficients = wavedec2(x, cfg.basis, cfg.levels)
    cfg = _fill_scales(coefficients, cfg)
    quantized = coefficients.map(
        lambda sid, band: quantize(band, subband_spec(cfg, sid), rounding)
    )
    return MwqResult(
        xq=waverec2(quantized),
        subbands=quantized,
        coefficients=coefficients,
        config=cfg,
    )


def mwq_backward(result: MwqResult, upstream: Tensor) -> tuple[Tensor, dict[str, float]]:
    """Gradients w.r.t. the input of `mwq_quantize` and w.r.t. every subband scale."""
    upstream = np.asarray(upstream)
    grad_bands = waverec2_adjoint(upstream, result.coefficients)
    coefficients = {sid: band for sid, _, _, band in result.coefficients.bands()}
    grad_scales: dict[str, float] = {}

    def through_quantizer(sid: str, grad: Tensor) -> Tensor:
        grad_x, grad_s = quantize_backward(
            coefficients[sid], grad, subband_spec(result.config, sid)
        )
        grad_scales[sid] = grad_s
        return grad_x

    grad_x = wavedec2_adjoint(grad_bands.map(through_quantizer))
    return grad_x, grad_scales


# --------------------------------------------------------------------------


def spatial_quantize(x: Tensor, bits: int) -> Tensor:
    """Signed uniform quantization with s = max|x|."""
    return quantize(x, QuantizerSpec(bits=bits))


def state_histogram(xq: Tensor, tol: float = 0.0) -> list[tuple[float, int]]:
    """(representative, count) pairs; a value joins the current group while
    it lies within `tol` of the group's first (smallest) value."""
    if tol < 0:
        raise ValueError(f"tol must be >= 0, got {tol}")
    values = np.sort(np.asarray(xq, dtype=np.float64).ravel())
    histogram: list[tuple[float, int]] = []
    start = 0
    for i in range(1, values.shape[0] + 1):
        if i == values.shape[0] or values[i] - values[start] > tol:
            histogram.append((float(values[start]), i - start))
            start = i
    return histogram


def count_representation_states(xq: Tensor, tol: float = 0.0) -> int:
    return len(state_histogram(xq, tol))


def receptive_field(basis: WaveletBasis | str, levels: int) -> int:
    """Per-axis spatial support of one level-J coefficient."""
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")
    length = resolve_basis(basis).filter_len
    field = length
    for _ in range(levels - 1):
        field = (field - 1) * 2 + length
    return field
