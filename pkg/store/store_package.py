from pathlib import Path
import logging

from ops.compress import QuantizedPackage, from_bytes, to_bytes

logger: logging.Logger = logging.getLogger(__name__)


def save(path: str | Path, pkg: QuantizedPackage) -> int:
    """Writes a quantized package to a `.mwq` file.

    Args:
        path (str | Path): Destination file.
        pkg (QuantizedPackage): The package; must hold at least one layer.

    Returns:
        int: Number of bytes written.
    """

    data = to_bytes(pkg)
    Path(path).write_bytes(data)
    logger.info(f"Wrote {len(pkg.layers)} layer(s), {len(data)} bytes to {path}")
    return len(data)


def load(path: str | Path) -> QuantizedPackage:
    return from_bytes(Path(path).read_bytes())
