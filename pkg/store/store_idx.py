from pathlib import Path
import logging
import struct
import gzip
import numpy as np

from exc.exceptions import FormatError

logger: logging.Logger = logging.getLogger(__name__)

IMAGES_MAGIC: int = 0x00000803
LABELS_MAGIC: int = 0x00000801
_UBYTE: int = 0x08


def _read_bytes(path: Path) -> bytes:
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as fh:
            return fh.read()
    return path.read_bytes()


def read_idx(path: str | Path, expected_magic: int | None = None) -> np.ndarray:
    """Reads an unsigned-byte IDX file (MNIST layout).

    The header is two zero bytes, a dtype code (0x08 = ubyte), the number
    of dimensions and one big-endian u32 per dimension. Files ending in
    `.gz` are decompressed on the fly.

    Args:
        path (str | Path): The IDX file.
        expected_magic (int | None): 0x00000803 for images, 0x00000801 for
            labels, or None to accept any ubyte IDX file.

    Raises:
        FormatError: On a wrong magic, a non-ubyte payload or a size mismatch.

    Returns:
        np.ndarray: uint8 array with the declared dimensions.
    """

    path = Path(path)
    data = _read_bytes(path)
    if len(data) < 4:
        raise FormatError(f"{path} is too short for an IDX header")
    (magic,) = struct.unpack(">I", data[:4])
    zero, dtype_code, ndim = magic >> 16, (magic >> 8) & 0xFF, magic & 0xFF
    if zero != 0 or dtype_code != _UBYTE:
        raise FormatError(f"{path} is not an unsigned-byte IDX file (magic {magic:#010x})")
    if expected_magic is not None and magic != expected_magic:
        raise FormatError(f"{path} has magic {magic:#010x}, expected {expected_magic:#010x}")
    header = 4 + 4 * ndim
    if len(data) < header:
        raise FormatError(f"{path} has a truncated IDX header")
    dims = struct.unpack(f">{ndim}I", data[4:header])
    count = int(np.prod(dims, dtype=np.int64))
    if len(data) - header != count:
        raise FormatError(f"{path} holds {len(data) - header} samples, header declares {count}")
    return np.frombuffer(data, dtype=np.uint8, offset=header).reshape(dims).copy()


# --------------------------------------------------------------------------


def find_idx(directory: str | Path, stem: str) -> Path:
    """Locates `stem` or `stem.gz` inside `directory`."""
    directory = Path(directory)
    for candidate in (directory / stem, directory / f"{stem}.gz"):
        if candidate.is_file():
            return candidate
    raise FileNotFoundError(f"neither {stem} nor {stem}.gz found in {directory}")
