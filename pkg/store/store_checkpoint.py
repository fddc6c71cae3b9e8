from typing import Mapping
from pathlib import Path
import logging
import struct
import numpy as np

from exc.exceptions import FormatError
from store.store_bytes import ByteReader
from ops.tensor import Tensor

logger: logging.Logger = logging.getLogger(__name__)

MAGIC: bytes = b"MWQC"
VERSION: int = 1
DTYPE_F32: int = 1


def encode(tensors: Mapping[str, Tensor]) -> bytes:
    """Serializes named tensors into the checkpoint container.

    The container is the magic "MWQC" and a u16 version followed by one
    record per tensor: u16 name length, UTF-8 name, u8 dtype tag (1 = f32),
    u8 ndim, u32 dims and the raw little-endian float32 payload. Records keep
    the mapping's iteration order.

    Args:
        tensors (Mapping[str, Tensor]): Tensors keyed by parameter name.

    Returns:
        bytes: The encoded container.
    """

    chunks = [MAGIC, struct.pack("<H", VERSION)]
    for name, tensor in tensors.items():
        raw_name = name.encode("utf-8")
        arr = np.asarray(tensor, dtype="<f4")
        chunks.append(struct.pack("<H", len(raw_name)) + raw_name)
        chunks.append(struct.pack("<BB", DTYPE_F32, arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes())
    return b"".join(chunks)


# --------------------------------------------------------------------------


def decode(data: bytes) -> dict[str, Tensor]:
    """Parses a checkpoint container.

    Args:
        data (bytes): The encoded container.

    Raises:
        FormatError: On a bad magic or version, an unknown dtype tag, a
            duplicated name or truncated data.

    Returns:
        dict[str, Tensor]: float32 tensors in file order.
    """

    reader = ByteReader(data, "checkpoint")
    magic = reader.take(len(MAGIC))
    if magic != MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}", hint="Not an MWQC checkpoint.")
    (version,) = reader.unpack("<H")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    tensors: dict[str, Tensor] = {}
    while not reader.exhausted:
        (name_len,) = reader.unpack("<H")
        name = reader.text(name_len)
        tag, ndim = reader.unpack("<BB")
        if tag != DTYPE_F32:
            raise FormatError(f"tensor {name!r} has unknown dtype tag {tag}")
        shape = reader.unpack(f"<{ndim}I")
        count = int(np.prod(shape, dtype=np.int64))
        payload = reader.take(4 * count)
        if name in tensors:
            raise FormatError(f"tensor {name!r} appears twice")
        tensors[name] = np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(shape)
    return tensors


# --------------------------------------------------------------------------


def save(path: str | Path, tensors: Mapping[str, Tensor]) -> None:
    data = encode(tensors)
    Path(path).write_bytes(data)
    logger.info(f"Wrote {len(tensors)} tensor(s) to {path}")


def load(path: str | Path) -> dict[str, Tensor]:
    return decode(Path(path).read_bytes())
