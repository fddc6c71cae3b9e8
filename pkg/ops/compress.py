"""Bit-packed storage of quantized wavelet subbands.

Byte layout (little-endian):

    "MWQ1" | u16 version | u32 layer count | layer records

    layer:   u16 name length, name (UTF-8) | u8 basis length, basis | u8 J
             | u8 ndim, u32 dims | u8 subband count | subbands
    subband: u8 level | u8 orientation (0 ll, 1 lh, 2 hl, 3 hh) | u8 bits
             | f32 scale | u32 rows | u32 cols | u32 payload length | payload

Codes are two's-complement integers packed MSB-first at the subband's bit
width; 32-bit subbands hold raw float32 values.
"""

from dataclasses import dataclass
from math import prod
import logging
import struct
from pydantic import ValidationError
import numpy as np

from exc.exceptions import (
    EmptyPackageError,
    FormatError,
    NotQuantizedError,
    QuantizerError,
    ShapeError,
)
from ops.mwq import mwq_quantize, subband_spec, weight_view
from ops.quantizer import dequantize, round_half_away
from ops.tensor import Tensor
from ops.wavelet import HighBand, SubbandSet, basis_filters, waverec2
from schemas.schemas_mwq import ORIENTATIONS, BitAllocation, MwqConfig, Orientation
from schemas.schemas_quantizer import FULL_PRECISION_BITS, QuantizerSpec
from store.store_bytes import ByteReader

logger: logging.Logger = logging.getLogger(__name__)

MAGIC: bytes = b"MWQ1"
VERSION: int = 1
GRID_TOLERANCE: float = 1e-6

_HEADER = struct.Struct("<4sHI")
_SUBBAND = struct.Struct("<BBBfIII")


@dataclass(frozen=True)
class SubbandRecord:
    level: int
    orientation: Orientation
    bits: int
    scale: float
    rows: int
    cols: int
    payload: bytes

    @property
    def count(self) -> int:
        return self.rows * self.cols


@dataclass(frozen=True)
class LayerRecord:
    name: str
    basis: str
    levels: int
    shape: tuple[int, ...]
    subbands: tuple[SubbandRecord, ...]

    @property
    def bits(self) -> list[int]:
        by_orientation = {rec.orientation: rec.bits for rec in self.subbands}
        if set(by_orientation) != set(ORIENTATIONS):
            raise FormatError(f"layer {self.name!r} lacks an orientation")
        return [by_orientation[o] for o in ORIENTATIONS]


@dataclass(frozen=True)
class QuantizedPackage:
    layers: tuple[LayerRecord, ...]

    def layer(self, name: str) -> LayerRecord:
        for record in self.layers:
            if record.name == name:
                return record
        raise KeyError(name)


# --------------------------------------------------------------------------


def pack_bits(codes: np.ndarray, bits: int) -> bytes:
    """Packs signed integer codes as `bits`-wide two's complement, MSB first."""
    codes = np.asarray(codes, dtype=np.int64).ravel()
    low, high = -(2 ** (bits - 1)), 2 ** (bits - 1) - 1
    if codes.size and (codes.min() < low or codes.max() > high):
        raise QuantizerError(f"codes outside the {bits}-bit range [{low}, {high}]")
    unsigned = codes.astype(np.uint64) & np.uint64(2**bits - 1)
    shifts = np.arange(bits - 1, -1, -1, dtype=np.uint64)
    planes = ((unsigned[:, None] >> shifts) & np.uint64(1)).astype(np.uint8)
    return np.packbits(planes.ravel()).tobytes()


def unpack_bits(payload: bytes, bits: int, count: int) -> np.ndarray:
    needed = (count * bits + 7) // 8
    if len(payload) < needed:
        raise FormatError(f"payload holds {len(payload)} bytes, {needed} needed for {count} codes")
    planes = np.unpackbits(np.frombuffer(payload, dtype=np.uint8), count=count * bits)
    weights = np.left_shift(np.int64(1), np.arange(bits - 1, -1, -1, dtype=np.int64))
    values = planes.reshape(count, bits).astype(np.int64) @ weights
    return np.where(values >= 2 ** (bits - 1), values - 2**bits, values)


def _on_grid_codes(band: Tensor, spec: QuantizerSpec, sid: str) -> np.ndarray:
    step = float(np.float32(spec.step))
    ratio = np.asarray(band, dtype=np.float64) / step
    codes = round_half_away(ratio)
    off = np.abs(ratio - codes) > GRID_TOLERANCE * np.maximum(1.0, np.abs(codes))
    if np.any(off) or np.any(np.abs(codes) > spec.levels):
        raise NotQuantizedError(
            f"subband {sid} holds values off its {spec.bits}-bit grid",
            hint="Pack the subbands returned by mwq_quantize.",
        )
    return codes.astype(np.int64)


def pack_layer(
    sb_q: SubbandSet, cfg: MwqConfig, name: str = "", shape: tuple[int, ...] | None = None
) -> LayerRecord:
    """Encodes quantized subbands; `shape` is the tensor shape restored on decode."""
    shape = tuple(shape) if shape is not None else sb_q.original_shape
    if len(sb_q.original_shape) != 2 or prod(shape) != prod(sb_q.original_shape):
        raise ShapeError(
            f"subbands of shape {sb_q.original_shape} cannot restore a tensor of shape {shape}"
        )
    records: list[SubbandRecord] = []
    for sid, level, orientation, band in sb_q.bands():
        spec = subband_spec(cfg, sid)
        if spec.scale is None:
            raise QuantizerError(f"subband {sid} has no scale", hint="Pack the config returned by mwq_quantize.")
        if spec.is_identity:
            payload = np.asarray(band, dtype="<f4").tobytes()
        else:
            payload = pack_bits(_on_grid_codes(band, spec, sid), spec.bits)
        rows, cols = band.shape
        records.append(
            SubbandRecord(level, orientation, spec.bits, spec.scale, rows, cols, payload)
        )
    return LayerRecord(
        name=name, basis=cfg.basis, levels=cfg.levels, shape=shape, subbands=tuple(records)
    )


def pack_tensor(name: str, w: Tensor, cfg: MwqConfig) -> tuple[LayerRecord, Tensor]:
    """Quantizes a weight tensor through its 2D view; returns the record and the reconstruction."""
    w = np.asarray(w)
    result = mwq_quantize(weight_view(w), cfg)
    record = pack_layer(result.subbands, result.config, name=name, shape=tuple(w.shape))
    return record, result.xq.reshape(w.shape)


def unpack_layer(record: LayerRecord) -> tuple[SubbandSet, MwqConfig]:
    basis = basis_filters(record.basis)
    if len(record.shape) < 2:
        raise FormatError(f"layer {record.name!r} has a {len(record.shape)}D shape")
    view = (record.shape[0], prod(record.shape[1:]))
    low: Tensor | None = None
    highs: list[HighBand] = []
    scales: dict[str, float] = {}
    for rec in record.subbands:
        if rec.bits == FULL_PRECISION_BITS:
            if len(rec.payload) != 4 * rec.count:
                raise FormatError(f"raw subband of {rec.count} values holds {len(rec.payload)} bytes")
            band = np.frombuffer(rec.payload, dtype="<f4").astype(np.float32)
        else:
            try:
                spec = QuantizerSpec(bits=rec.bits, scale=rec.scale)
            except ValidationError as exc:
                raise FormatError(
                    f"layer {record.name!r} subband {rec.orientation}{rec.level} has "
                    f"an invalid quantizer (bits={rec.bits}, scale={rec.scale!r})"
                ) from exc
            band = dequantize(unpack_bits(rec.payload, rec.bits, rec.count), spec)
        band = band.reshape(rec.rows, rec.cols)
        scales[f"{rec.orientation}{rec.level}"] = rec.scale
        if rec.orientation == "ll":
            low = band
        else:
            highs.append((rec.level, rec.orientation, band))
    if low is None:
        raise FormatError(f"layer {record.name!r} has no ll subband")
    sb = SubbandSet(
        basis=basis, levels=record.levels, low=low, highs=tuple(highs), original_shape=view
    )
    try:
        cfg = MwqConfig(levels=record.levels, bits=record.bits, basis=record.basis, scales=scales)  # type: ignore[arg-type]
    except ValidationError as exc:
        raise FormatError(f"layer {record.name!r} does not describe a valid MWQ layer") from exc
    return sb, cfg


def decompress_layer(record: LayerRecord) -> Tensor:
    sb, _ = unpack_layer(record)
    return waverec2(sb).reshape(record.shape)


# --------------------------------------------------------------------------


def to_bytes(pkg: QuantizedPackage) -> bytes:
    if not pkg.layers:
        raise EmptyPackageError("refusing to encode a package without layers")
    chunks = [_HEADER.pack(MAGIC, VERSION, len(pkg.layers))]
    for layer in pkg.layers:
        name, basis = layer.name.encode("utf-8"), layer.basis.encode("ascii")
        chunks.append(struct.pack("<H", len(name)) + name)
        chunks.append(struct.pack("<B", len(basis)) + basis)
        chunks.append(struct.pack("<BB", layer.levels, len(layer.shape)))
        chunks.append(struct.pack(f"<{len(layer.shape)}I", *layer.shape))
        chunks.append(struct.pack("<B", len(layer.subbands)))
        for rec in layer.subbands:
            chunks.append(
                _SUBBAND.pack(
                    rec.level,
                    ORIENTATIONS.index(rec.orientation),
                    rec.bits,
                    rec.scale,
                    rec.rows,
                    rec.cols,
                    len(rec.payload),
                )
            )
            chunks.append(rec.payload)
    return b"".join(chunks)


def from_bytes(data: bytes) -> QuantizedPackage:
    reader = ByteReader(data, "package")
    magic, version, count = reader.unpack(_HEADER)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", hint="Not a .mwq package.")
    if version != VERSION:
        raise FormatError(f"unsupported package version {version}")
    if count == 0:
        raise EmptyPackageError("package has no layers")
    layers: list[LayerRecord] = []
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.text(name_len)
        (basis_len,) = reader.unpack("<B")
        basis = reader.text(basis_len, "ascii")
        levels, ndim = reader.unpack("<BB")
        shape = reader.unpack(f"<{ndim}I")
        (n_bands,) = reader.unpack("<B")
        records: list[SubbandRecord] = []
        for _ in range(n_bands):
            level, code, bits, scale, rows, cols, size = reader.unpack(_SUBBAND)
            if code >= len(ORIENTATIONS) or not 1 <= bits <= FULL_PRECISION_BITS:
                raise FormatError(f"corrupt subband header in layer {name!r}")
            records.append(
                SubbandRecord(
                    level, ORIENTATIONS[code], bits, scale, rows, cols, reader.take(size)
                )
            )
        layers.append(LayerRecord(name, basis, levels, tuple(shape), tuple(records)))
    if not reader.exhausted:
        raise FormatError("trailing bytes after the last layer")
    return QuantizedPackage(layers=tuple(layers))


# --------------------------------------------------------------------------


def nominal_compression_ratio(alloc: BitAllocation) -> float:
    """32 over the coefficient-weighted mean bit-width; scales are not counted."""
    return FULL_PRECISION_BITS / alloc.mean_bits()


def float32_bytes(pkg: QuantizedPackage) -> int:
    """Size of the layers stored as dense float32."""
    return sum(4 * prod(layer.shape) for layer in pkg.layers)


def effective_compression_ratio(pkg: QuantizedPackage, original_bytes: int) -> float:
    if original_bytes <= 0:
        raise ValueError(f"original size must be positive, got {original_bytes}")
    return original_bytes / len(to_bytes(pkg))


def package_nominal_ratio(pkg: QuantizedPackage) -> float:
    """Nominal ratio of a whole package: 32 over the coefficient-weighted mean bit-width."""
    if not pkg.layers:
        raise EmptyPackageError("package has no layers")
    bits = sum(rec.bits * rec.count for layer in pkg.layers for rec in layer.subbands)
    count = sum(rec.count for layer in pkg.layers for rec in layer.subbands)
    return FULL_PRECISION_BITS * count / bits
