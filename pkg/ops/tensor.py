"""Dense tensor helpers and convolution kernels.

A tensor is a numpy array of floating dtype in row-major (C) order; 4D
tensors use the N, C, H, W layout. Constructors produce float32, kernels
preserve the floating dtype of their inputs. Every operation returns a new
array and never writes into its arguments.

Convolutions are computed as im2col + one tensordot per call. Each output
element is a single dot product, so for a fixed BLAS thread count
(MWQ_THREADS) results are reproducible bit for bit.
"""

from numpy.lib.stride_tricks import sliding_window_view
from numpy.typing import ArrayLike, NDArray
from typing import Sequence, TypeAlias
import numpy as np

from exc.exceptions import InvalidShapeError, ShapeError

Tensor: TypeAlias = NDArray[np.floating]
DTYPE = np.float32

IntPair: TypeAlias = int | tuple[int, int]


def check_extents(shape: Sequence[int]) -> tuple[int, ...]:
    extents = tuple(int(e) for e in shape)
    if not extents or any(e < 1 for e in extents):
        raise InvalidShapeError(
            f"invalid shape {list(extents)}: every extent must be >= 1",
            hint="Tensors have at least one dimension and no empty axis.",
        )
    return extents


def new(shape: Sequence[int], fill: float = 0.0) -> Tensor:
    return np.full(check_extents(shape), fill, dtype=DTYPE)


def as_tensor(data: ArrayLike, dtype: type[np.floating] | None = None) -> Tensor:
    """Validates `data` as a tensor; non-float input is converted to float32."""
    arr = np.asarray(data)
    if dtype is not None:
        arr = arr.astype(dtype, copy=False)
    elif not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(DTYPE)
    check_extents(arr.shape)
    return np.ascontiguousarray(arr)


def flatten_index(index: Sequence[int], shape: Sequence[int]) -> int:
    return int(np.ravel_multi_index(tuple(index), check_extents(shape)))


def unflatten_index(flat: int, shape: Sequence[int]) -> tuple[int, ...]:
    return tuple(int(i) for i in np.unravel_index(flat, check_extents(shape)))


# --------------------------------------------------------------------------


def _pair(value: IntPair) -> tuple[int, int]:
    if isinstance(value, tuple):
        return int(value[0]), int(value[1])
    return int(value), int(value)


def _check_conv(x: Tensor, kernel: Tensor, stride: tuple[int, int]) -> None:
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeError(
            f"conv2d expects 4D input and kernel, got {x.shape} and {kernel.shape}"
        )
    if kernel.shape[1] != x.shape[1]:
        raise ShapeError(
            f"channel mismatch: input has {x.shape[1]} channels, kernel expects {kernel.shape[1]}"
        )
    if min(stride) < 1:
        raise ShapeError(f"stride must be >= 1, got {stride}")


def _windows(xp: Tensor, kh: int, kw: int, sh: int, sw: int) -> NDArray[np.floating]:
    # (N, C, OH, OW, kh, kw) view, no copy
    return sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]


def _pad(x: Tensor, ph: int, pw: int) -> Tensor:
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))


def conv2d(x: Tensor, kernel: Tensor, stride: IntPair = 1, pad: IntPair = 0) -> Tensor:
    """Cross-correlation of x[N, Cin, H, W] with kernel[Cout, Cin, kh, kw].

    Output extents are floor((H + 2*pad - kh) / stride) + 1 (same for W).
    """
    sh, sw = _pair(stride)
    ph, pw = _pair(pad)
    _check_conv(x, kernel, (sh, sw))
    if ph < 0 or pw < 0:
        raise ShapeError(f"padding must be >= 0, got {(ph, pw)}")
    xp = _pad(x, ph, pw)
    kh, kw = kernel.shape[2:]
    if kh > xp.shape[2] or kw > xp.shape[3]:
        raise ShapeError(
            f"kernel {kernel.shape[2:]} larger than padded input {xp.shape[2:]}"
        )
    dtype = np.result_type(x.dtype, kernel.dtype)
    cols = _windows(xp, kh, kw, sh, sw)
    out = np.tensordot(cols, kernel.astype(dtype, copy=False), axes=([1, 4, 5], [1, 2, 3]))
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2), dtype=dtype)


def conv_transpose2d(
    y: Tensor,
    kernel: Tensor,
    stride: IntPair = 1,
    out_hw: tuple[int, int] | None = None,
) -> Tensor:
    """Fractionally-strided convolution, the adjoint of unpadded `conv2d`.

    Maps y[N, Cout, OH, OW] back to [N, Cin, H, W] with
    H = (OH - 1) * sh + kh unless a larger `out_hw` is requested.
    """
    sh, sw = _pair(stride)
    if y.ndim != 4 or kernel.ndim != 4 or y.shape[1] != kernel.shape[0]:
        raise ShapeError(
            f"conv_transpose2d shape mismatch: {y.shape} against kernel {kernel.shape}"
        )
    if min(sh, sw) < 1:
        raise ShapeError(f"stride must be >= 1, got {(sh, sw)}")
    n, _, oh, ow = y.shape
    _, cin, kh, kw = kernel.shape
    min_h, min_w = (oh - 1) * sh + kh, (ow - 1) * sw + kw
    h, w = out_hw if out_hw is not None else (min_h, min_w)
    if h < min_h or w < min_w:
        raise ShapeError(f"output {(h, w)} too small for transposed conv, need {(min_h, min_w)}")
    dtype = np.result_type(y.dtype, kernel.dtype)
    # (N, OH, OW, Cin, kh, kw)
    cols = np.tensordot(y, kernel.astype(dtype, copy=False), axes=([1], [0]))
    out = np.zeros((n, cin, h, w), dtype=dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + sh * oh : sh, j : j + sw * ow : sw] += cols[
                :, :, :, :, i, j
            ].transpose(0, 3, 1, 2)
    return out


def conv2d_backward(
    x: Tensor,
    kernel: Tensor,
    upstream: Tensor,
    stride: IntPair = 1,
    pad: IntPair = 0,
) -> tuple[Tensor, Tensor]:
    """Gradients of `conv2d(x, kernel, stride, pad)` w.r.t. input and kernel."""
    sh, sw = _pair(stride)
    ph, pw = _pair(pad)
    _check_conv(x, kernel, (sh, sw))
    xp = _pad(x, ph, pw)
    kh, kw = kernel.shape[2:]
    cols = _windows(xp, kh, kw, sh, sw)
    if upstream.shape != (x.shape[0], kernel.shape[0], cols.shape[2], cols.shape[3]):
        raise ShapeError(
            f"upstream gradient {upstream.shape} does not match conv output "
            f"{(x.shape[0], kernel.shape[0], cols.shape[2], cols.shape[3])}"
        )
    grad_kernel = np.tensordot(upstream, cols, axes=([0, 2, 3], [0, 2, 3]))
    grad_xp = conv_transpose2d(upstream, kernel, (sh, sw), out_hw=xp.shape[2:])
    grad_x = grad_xp[:, :, ph : ph + x.shape[2], pw : pw + x.shape[3]]
    return np.ascontiguousarray(grad_x), grad_kernel.astype(kernel.dtype, copy=False)
