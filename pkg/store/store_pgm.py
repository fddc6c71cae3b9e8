from PIL import Image, UnidentifiedImageError
from pathlib import Path
import logging
import numpy as np

from exc.exceptions import FormatError
from ops.tensor import Tensor

logger: logging.Logger = logging.getLogger(__name__)


def read_pgm(path: str | Path) -> Tensor:
    """Reads a grayscale binary PGM (P5) image.

    Args:
        path (str | Path): The image file.

    Raises:
        FormatError: If the file is not a grayscale PGM.

    Returns:
        Tensor: float32 [H, W] array of raw sample values.
    """

    try:
        with Image.open(path) as img:
            img.load()
            if img.format != "PPM" or img.mode not in ("L", "I", "I;16", "I;16B"):
                raise FormatError(
                    f"{path} is not a grayscale PGM (format {img.format}, mode {img.mode})",
                    hint="Convert the image with e.g. `convert in.png -depth 8 out.pgm`.",
                )
            return np.asarray(img, dtype=np.float32)
    except UnidentifiedImageError as e:
        raise FormatError(f"{path} is not an image: {e}") from e


# --------------------------------------------------------------------------


def to_bytes_affine(x: Tensor) -> np.ndarray:
    """Rescales min..max onto 0..255; a constant map becomes all zeros."""
    x = np.asarray(x, dtype=np.float64)
    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        return np.zeros(x.shape, dtype=np.uint8)
    return np.rint((x - lo) * (255.0 / (hi - lo))).astype(np.uint8)


def to_bytes_clipped(x: Tensor) -> np.ndarray:
    return np.rint(np.clip(np.asarray(x, dtype=np.float64), 0.0, 255.0)).astype(np.uint8)


def write_pgm(path: str | Path, pixels: np.ndarray) -> None:
    """Writes an 8-bit [H, W] array as a binary PGM (P5)."""
    pixels = np.asarray(pixels)
    if pixels.ndim != 2 or pixels.dtype != np.uint8:
        raise FormatError(f"PGM output needs a 2D uint8 array, got {pixels.dtype} {pixels.shape}")
    Image.fromarray(pixels).save(path, format="PPM")
    logger.debug(f"Wrote {pixels.shape[1]}x{pixels.shape[0]} PGM to {path}")
