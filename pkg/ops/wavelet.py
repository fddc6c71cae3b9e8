"""Orthogonal discrete wavelet transforms with periodic boundary handling.

Analysis is a wrap-pad followed by a stride-2 convolution with the two-tap
bank [g; h]; synthesis is the matching fractionally-strided convolution
with the wrapped tail folded back. For orthonormal filters the synthesis
operator is both the adjoint and the inverse of the analysis operator.

Subband naming: in X_ab the first letter is the filter applied along the H
axis (columns), the second the filter applied along the W axis (rows). So
`lh` is low-pass down the columns and high-pass along the rows.
"""

from dataclasses import dataclass, field
from typing import Callable, Iterator, Literal
import logging
import math
import numpy as np

from exc.exceptions import InvalidLengthError, ShapeError, UnsupportedBasisError
from ops.tensor import Tensor, conv2d, conv_transpose2d
from schemas.schemas_mwq import (
    HIGH_ORIENTATIONS,
    Orientation,
    WaveletName,
    subband_id,
)

logger: logging.Logger = logging.getLogger(__name__)

_SQRT2 = math.sqrt(2.0)
_SQRT3 = math.sqrt(3.0)

# Synthesis low-pass g of each basis (equal to PyWavelets' rec_lo).
_LOW_PASS: dict[str, tuple[float, ...]] = {
    "haar": (1.0 / _SQRT2, 1.0 / _SQRT2),
    "db2": (
        (1.0 + _SQRT3) / (4.0 * _SQRT2),
        (3.0 + _SQRT3) / (4.0 * _SQRT2),
        (3.0 - _SQRT3) / (4.0 * _SQRT2),
        (1.0 - _SQRT3) / (4.0 * _SQRT2),
    ),
    # At length 4 the least-asymmetric solution coincides with db2
    "sym2": (
        (1.0 + _SQRT3) / (4.0 * _SQRT2),
        (3.0 + _SQRT3) / (4.0 * _SQRT2),
        (3.0 - _SQRT3) / (4.0 * _SQRT2),
        (1.0 - _SQRT3) / (4.0 * _SQRT2),
    ),
    "coif2": (
        0.016387336463522112,
        -0.04146493678175915,
        -0.06737255472196302,
        0.3861100668211622,
        0.8127236354455423,
        0.41700518442169254,
        -0.0764885990783064,
        -0.0594344186464569,
        0.023680171946334084,
        0.0056114348193944995,
        -0.0018232088707029932,
        -0.0007205494453645122,
    ),
}

FILTER_TOLERANCE = 1e-6


@dataclass(frozen=True)
class WaveletBasis:
    name: WaveletName
    g: np.ndarray
    h: np.ndarray

    @property
    def filter_len(self) -> int:
        return int(self.g.shape[0])


def quadrature_mirror(g: np.ndarray) -> np.ndarray:
    """h[k] = (-1)^k * g[L-1-k]."""
    signs = np.where(np.arange(g.shape[0]) % 2 == 0, 1.0, -1.0)
    return signs * g[::-1]


def _validated(name: str, taps: tuple[float, ...]) -> WaveletBasis:
    g = np.asarray(taps, dtype=np.float64)
    h = quadrature_mirror(g)
    checks = {
        "sum(g) == sqrt(2)": abs(g.sum() - _SQRT2),
        "sum(h) == 0": abs(h.sum()),
        "sum(g^2) == 1": abs(np.dot(g, g) - 1.0),
        "sum(h^2) == 1": abs(np.dot(h, h) - 1.0),
    }
    for label, error in checks.items():
        if error > FILTER_TOLERANCE:
            raise UnsupportedBasisError(
                f"filter table for {name} violates {label} (error {error:.3g})"
            )
    if g.shape[0] % 2:
        raise UnsupportedBasisError(f"filter length of {name} must be even")
    g.setflags(write=False)
    h.setflags(write=False)
    return WaveletBasis(name=name, g=g, h=h)  # type: ignore[arg-type]


_BASES: dict[str, WaveletBasis] = {
    name: _validated(name, taps) for name, taps in _LOW_PASS.items()
}


def basis_filters(name: str) -> WaveletBasis:
    basis = _BASES.get(name)
    if basis is None:
        raise UnsupportedBasisError(
            f"unsupported wavelet basis {name!r}",
            hint=f"Choose one of {', '.join(sorted(_BASES))}.",
        )
    return basis


def resolve_basis(basis: WaveletBasis | str) -> WaveletBasis:
    return basis if isinstance(basis, WaveletBasis) else basis_filters(basis)


# --------------------------------------------------------------------------

Axis = Literal["h", "w"]


def _bank(basis: WaveletBasis, axis: Axis, dtype: np.dtype) -> np.ndarray:
    taps = np.stack([basis.g, basis.h]).astype(dtype)
    if axis == "w":
        return taps[:, None, None, :]
    return taps[:, None, :, None]


def _analyze(x4: Tensor, basis: WaveletBasis, axis: Axis) -> Tensor:
    """(B, 1, H, W) -> (B, 2, ...) with the filtered axis halved; channel 0 low, 1 high."""
    tail = basis.filter_len - 2
    if axis == "w":
        xp = np.pad(x4, ((0, 0), (0, 0), (0, 0), (0, tail)), mode="wrap")
        return conv2d(xp, _bank(basis, axis, x4.dtype), stride=(1, 2))
    xp = np.pad(x4, ((0, 0), (0, 0), (0, tail), (0, 0)), mode="wrap")
    return conv2d(xp, _bank(basis, axis, x4.dtype), stride=(2, 1))


def _fold(full: Tensor, n: int, axis: int) -> Tensor:
    # Adds every sample past n back onto index (i mod n)
    out = np.take(full, np.arange(n), axis=axis)
    for start in range(n, full.shape[axis], n):
        chunk = np.take(full, np.arange(start, min(start + n, full.shape[axis])), axis=axis)
        index = [slice(None)] * full.ndim
        index[axis] = slice(0, chunk.shape[axis])
        out[tuple(index)] += chunk
    return out


def _synthesize(y4: Tensor, basis: WaveletBasis, axis: Axis) -> Tensor:
    """(B, 2, ...) -> (B, 1, ...) with the filtered axis doubled."""
    if axis == "w":
        full = conv_transpose2d(y4, _bank(basis, axis, y4.dtype), stride=(1, 2))
        return _fold(full, 2 * y4.shape[3], axis=3)
    full = conv_transpose2d(y4, _bank(basis, axis, y4.dtype), stride=(2, 1))
    return _fold(full, 2 * y4.shape[2], axis=2)


def _check_even(extent: int, basis: WaveletBasis, what: str) -> None:
    if extent % 2 or extent < 2:
        raise InvalidLengthError(
            f"{what} {extent} must be even for {basis.name}",
            hint="Non-divisible sizes are rejected instead of padded.",
        )


def _float(x: Tensor) -> Tensor:
    arr = np.asarray(x)
    return arr if np.issubdtype(arr.dtype, np.floating) else arr.astype(np.float32)


# --------------------------------------------------------------------------


def dwt1d(s: Tensor, basis: WaveletBasis | str) -> tuple[Tensor, Tensor]:
    basis = resolve_basis(basis)
    s = _float(s)
    if s.ndim != 1:
        raise ShapeError(f"dwt1d expects a 1D signal, got shape {s.shape}")
    _check_even(s.shape[0], basis, "signal length")
    if s.shape[0] < basis.filter_len:
        raise InvalidLengthError(
            f"signal length {s.shape[0]} is shorter than the {basis.filter_len}-tap {basis.name} filter"
        )
    out = _analyze(s.reshape(1, 1, 1, -1), basis, "w")
    return out[0, 0, 0].copy(), out[0, 1, 0].copy()


def idwt1d(low: Tensor, high: Tensor, basis: WaveletBasis | str) -> Tensor:
    basis = resolve_basis(basis)
    low, high = _float(low), _float(high)
    if low.ndim != 1 or low.shape != high.shape:
        raise ShapeError(
            f"idwt1d expects two 1D bands of equal length, got {low.shape} and {high.shape}"
        )
    _check_even(2 * low.shape[0], basis, "signal length")
    y = np.stack([low, high]).reshape(1, 2, 1, -1)
    return _synthesize(y, basis, "w")[0, 0, 0].copy()


def dwt2d(x: Tensor, basis: WaveletBasis | str) -> tuple[Tensor, Tensor, Tensor, Tensor]:
    """Single-level separable DWT over the last two axes: (ll, lh, hl, hh)."""
    basis = resolve_basis(basis)
    x = _float(x)
    if x.ndim < 2:
        raise ShapeError(f"dwt2d expects at least 2 dims, got shape {x.shape}")
    *lead, h, w = x.shape
    _check_even(h, basis, "height")
    _check_even(w, basis, "width")
    rows = _analyze(x.reshape(-1, 1, h, w), basis, "w")  # (B, 2w, H, W/2)
    b = rows.shape[0]
    cols = _analyze(rows.reshape(b * 2, 1, h, w // 2), basis, "h")
    cols = cols.reshape(b, 2, 2, h // 2, w // 2)  # [batch, w-band, h-band]
    out_shape = (*lead, h // 2, w // 2)
    ll = cols[:, 0, 0].reshape(out_shape)
    lh = cols[:, 1, 0].reshape(out_shape)
    hl = cols[:, 0, 1].reshape(out_shape)
    hh = cols[:, 1, 1].reshape(out_shape)
    return ll, lh, hl, hh


def idwt2d(ll: Tensor, lh: Tensor, hl: Tensor, hh: Tensor, basis: WaveletBasis | str) -> Tensor:
    basis = resolve_basis(basis)
    bands = [_float(band) for band in (ll, lh, hl, hh)]
    shape = bands[0].shape
    if any(band.shape != shape for band in bands) or len(shape) < 2:
        raise ShapeError(
            f"idwt2d subbands must share one shape, got {[band.shape for band in bands]}"
        )
    *lead, h2, w2 = shape
    _check_even(2 * h2, basis, "height")
    _check_even(2 * w2, basis, "width")
    ll, lh, hl, hh = (band.reshape(-1, h2, w2) for band in bands)
    b = ll.shape[0]
    stacked = np.stack(
        [np.stack([ll, hl], axis=1), np.stack([lh, hh], axis=1)], axis=1
    )  # [batch, w-band, h-band, ...]
    cols = _synthesize(stacked.reshape(b * 2, 2, h2, w2), basis, "h")
    rows = _synthesize(cols.reshape(b, 2, 2 * h2, w2), basis, "w")
    return rows.reshape(*lead, 2 * h2, 2 * w2)


def dwt2d_adjoint(
    grad_ll: Tensor, grad_lh: Tensor, grad_hl: Tensor, grad_hh: Tensor, basis: WaveletBasis | str
) -> Tensor:
    """Pulls subband gradients back to the input of `dwt2d`."""
    return idwt2d(grad_ll, grad_lh, grad_hl, grad_hh, basis)


def idwt2d_adjoint(grad: Tensor, basis: WaveletBasis | str) -> tuple[Tensor, Tensor, Tensor, Tensor]:
    """Pulls an output gradient back to the four subbands of `idwt2d`."""
    return dwt2d(grad, basis)


# --------------------------------------------------------------------------

HighBand = tuple[int, Orientation, Tensor]


@dataclass(frozen=True)
class SubbandSet:
    basis: WaveletBasis
    levels: int
    low: Tensor
    # Coarsest level first; lh, hl, hh within a level
    highs: tuple[HighBand, ...]
    original_shape: tuple[int, ...] = field(default=())

    def bands(self) -> Iterator[tuple[str, int, Orientation, Tensor]]:
        yield subband_id(self.levels, "ll"), self.levels, "ll", self.low
        for level, orientation, band in self.highs:
            yield subband_id(level, orientation), level, orientation, band

    def band(self, sid: str) -> Tensor:
        for bid, _, _, band in self.bands():
            if bid == sid:
                return band
        raise KeyError(sid)

    def map(self, fn: Callable[[str, Tensor], Tensor]) -> "SubbandSet":
        low_id = subband_id(self.levels, "ll")
        return SubbandSet(
            basis=self.basis,
            levels=self.levels,
            low=fn(low_id, self.low),
            highs=tuple(
                (level, o, fn(subband_id(level, o), band)) for level, o, band in self.highs
            ),
            original_shape=self.original_shape,
        )


def _check_levels(shape: tuple[int, ...], basis: WaveletBasis, levels: int) -> None:
    if levels < 1:
        raise InvalidLengthError(f"decomposition level must be >= 1, got {levels}")
    if len(shape) < 2:
        raise ShapeError(f"wavedec2 expects at least 2 dims, got shape {shape}")
    for extent in shape[-2:]:
        if extent % 2**levels:
            raise InvalidLengthError(
                f"spatial extent {extent} must be divisible by 2^{levels} for {basis.name}",
                hint="Lower --levels or use a shorter basis.",
            )


def wavedec2(x: Tensor, basis: WaveletBasis | str, levels: int) -> SubbandSet:
    basis = resolve_basis(basis)
    x = _float(x)
    _check_levels(x.shape, basis, levels)
    highs: list[HighBand] = []
    low = x
    for level in range(1, levels + 1):
        low, lh, hl, hh = dwt2d(low, basis)
        highs[:0] = [(level, "lh", lh), (level, "hl", hl), (level, "hh", hh)]
    return SubbandSet(
        basis=basis,
        levels=levels,
        low=low,
        highs=tuple(highs),
        original_shape=tuple(x.shape),
    )


def _expected_shape(sb: SubbandSet, level: int) -> tuple[int, ...]:
    *lead, h, w = sb.original_shape
    return (*lead, h // 2**level, w // 2**level)


def waverec2(sb: SubbandSet) -> Tensor:
    if len(sb.original_shape) < 2 or len(sb.highs) != 3 * sb.levels:
        raise ShapeError(
            f"inconsistent subband set: {len(sb.highs)} high bands for J={sb.levels}"
        )
    _check_levels(sb.original_shape, sb.basis, sb.levels)
    if sb.low.shape != _expected_shape(sb, sb.levels):
        raise ShapeError(
            f"low band shape {sb.low.shape} inconsistent with original shape {sb.original_shape}"
        )
    by_level: dict[int, dict[str, Tensor]] = {}
    for level, orientation, band in sb.highs:
        if band.shape != _expected_shape(sb, level):
            raise ShapeError(
                f"{orientation}{level} shape {band.shape} inconsistent with original shape {sb.original_shape}"
            )
        by_level.setdefault(level, {})[orientation] = band
    current = sb.low
    for level in range(sb.levels, 0, -1):
        bands = by_level.get(level, {})
        if set(bands) != set(HIGH_ORIENTATIONS):
            raise ShapeError(f"level {level} lacks one of lh/hl/hh")
        current = idwt2d(current, bands["lh"], bands["hl"], bands["hh"], sb.basis)
    return current


def wavedec2_adjoint(grad_sb: SubbandSet) -> Tensor:
    """Pulls subband gradients back to the input of `wavedec2`."""
    return waverec2(grad_sb)


def waverec2_adjoint(grad: Tensor, like: SubbandSet) -> SubbandSet:
    """Pulls an output gradient back to the subbands of `waverec2(like)`."""
    if tuple(grad.shape) != like.original_shape:
        raise ShapeError(
            f"gradient shape {grad.shape} does not match reconstruction {like.original_shape}"
        )
    return wavedec2(grad, like.basis, like.levels)


def supports_shape(shape: tuple[int, ...], basis: WaveletBasis | str, levels: int) -> bool:
    """True if `wavedec2` accepts a tensor of `shape` at this basis and level."""
    try:
        _check_levels(tuple(shape), resolve_basis(basis), levels)
    except ShapeError:
        return False
    return True
