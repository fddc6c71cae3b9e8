"""High-frequency enhancement of feature maps.

A map is decomposed, every detail subband is multiplied by one gain alpha,
and the result is reconstructed:

    x_hat = waverec2(ll_J, alpha * highs)  =  low(x) + alpha * high(x)

The transform is orthonormal, so the map is symmetric: its gradient with
respect to x is the same enhancement applied to the upstream gradient, and
the gradient for alpha is the inner product of the upstream with high(x).
alpha = 1 is the identity.
"""

from dataclasses import dataclass
import logging
import math
import numpy as np

from exc.exceptions import ConfigError, ShapeError
from ops.tensor import Tensor
from ops.wavelet import SubbandSet, wavedec2, waverec2
from schemas.schemas_mwq import WaveletName

logger: logging.Logger = logging.getLogger(__name__)


@dataclass
class EnhanceLayer:
    """Scales every high-frequency subband of a feature map by one gain alpha."""

    basis: WaveletName = "haar"
    levels: int = 1
    alpha: float = 1.2

    def __post_init__(self) -> None:
        if self.levels < 1:
            raise ConfigError(f"enhancement level must be >= 1, got {self.levels}")
        if not math.isfinite(self.alpha):
            raise ConfigError(f"enhancement gain must be finite, got {self.alpha}")


@dataclass(frozen=True)
class EnhanceCache:
    layer: EnhanceLayer
    alpha: float
    highs_only: Tensor  # waverec2 of x with the low band zeroed


def _split(x: Tensor, layer: EnhanceLayer) -> SubbandSet:
    return wavedec2(x, layer.basis, layer.levels)


# --------------------------------------------------------------------------


def enhance_forward(x: Tensor, layer: EnhanceLayer) -> tuple[Tensor, EnhanceCache]:
    sb = _split(x, layer)
    low_id = f"ll{layer.levels}"
    dtype = sb.low.dtype.type
    alpha = dtype(layer.alpha)
    x_hat = waverec2(sb.map(lambda sid, band: band if sid == low_id else band * alpha))
    highs_only = waverec2(sb.map(lambda sid, band: np.zeros_like(band) if sid == low_id else band))
    return x_hat, EnhanceCache(layer=layer, alpha=layer.alpha, highs_only=highs_only)


def enhance(x: Tensor, layer: EnhanceLayer) -> Tensor:
    x_hat, _ = enhance_forward(x, layer)
    return x_hat


def enhance_backward(cache: EnhanceCache, upstream: Tensor) -> tuple[Tensor, float]:
    upstream = np.asarray(upstream)
    if upstream.shape != cache.highs_only.shape:
        raise ShapeError(
            f"gradient shape {upstream.shape} does not match enhanced map {cache.highs_only.shape}"
        )
    # The map is symmetric (orthogonal transform, diagonal gain)
    at_forward = EnhanceLayer(basis=cache.layer.basis, levels=cache.layer.levels, alpha=cache.alpha)
    grad_x = enhance(upstream, at_forward)
    grad_alpha = float(np.sum(upstream * cache.highs_only, dtype=np.float64))
    return grad_x, grad_alpha
