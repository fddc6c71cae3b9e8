from pathlib import Path
from math import prod
import logging
import click
import numpy as np

from cli.options import ExistingFile, OutputFile, basis_option, bits_option, levels_option
from exc.exceptions import EmptyPackageError
from ops.compress import (
    LayerRecord,
    QuantizedPackage,
    decompress_layer,
    effective_compression_ratio,
    float32_bytes,
    package_nominal_ratio,
    pack_tensor,
)
from ops.wavelet import supports_shape
from schemas.schemas_mwq import MwqConfig
from store import store_checkpoint, store_package

logger: logging.Logger = logging.getLogger(__name__)


def _echo_ratios(pkg: QuantizedPackage) -> None:
    click.echo(f"nominal_ratio,{package_nominal_ratio(pkg):.2f}")
    click.echo(f"effective_ratio,{effective_compression_ratio(pkg, float32_bytes(pkg)):.2f}")


def _learned_scales(tensors: dict[str, np.ndarray], prefix: str, cfg: MwqConfig) -> dict[str, float]:
    scales: dict[str, float] = {}
    for sid in cfg.subband_ids():
        stored = tensors.get(f"{prefix}.wscale.{sid}")
        if stored is not None and stored.size == 1 and float(stored.ravel()[0]) > 0:
            scales[sid] = float(stored.ravel()[0])
    return scales


# --------------------------------------------------------------------------


@click.command("compress")
@click.option("--model", type=ExistingFile, required=True, help="Checkpoint (MWQC) to compress.")
@basis_option
@levels_option
@bits_option()
@click.option("--out", type=OutputFile, required=True, help="Destination .mwq package.")
def compress_command(model: Path, basis: str, levels: int, bits: list[int], out: Path) -> None:
    """Quantize every `*.weight` tensor of MODEL in the wavelet domain and pack the codes.

    Learned subband scales stored next to a weight (`<layer>.wscale.<subband>`)
    are reused; other scales start at max|subband|.
    """
    cfg = MwqConfig(levels=levels, bits=bits, basis=basis)  # type: ignore[arg-type]
    tensors = store_checkpoint.load(model)
    records: list[LayerRecord] = []
    for name, tensor in tensors.items():
        if not name.endswith(".weight"):
            continue
        view = (tensor.shape[0], prod(tensor.shape[1:])) if tensor.ndim >= 2 else tensor.shape
        if tensor.ndim < 2 or not supports_shape(view, basis, levels):
            logger.warning(f"Skipping {name}: 2D view {view} does not fit {basis} at J={levels}")
            continue
        prefix = name.removesuffix(".weight")
        layer_cfg = cfg.with_scales(_learned_scales(tensors, prefix, cfg))
        record, _ = pack_tensor(name, tensor, layer_cfg)
        records.append(record)
    if not records:
        raise EmptyPackageError(
            f"no weight tensor of {model} fits {basis} at J={levels}",
            hint="Lower --levels or use a shorter basis.",
        )
    pkg = QuantizedPackage(layers=tuple(records))
    store_package.save(out, pkg)
    _echo_ratios(pkg)


@click.command("decompress")
@click.option("--in", "package", type=ExistingFile, required=True, help="Source .mwq package.")
@click.option("--out", type=OutputFile, required=True, help="Destination checkpoint (MWQC).")
def decompress_command(package: Path, out: Path) -> None:
    """Reconstruct the weights stored in a package into a checkpoint."""
    pkg = store_package.load(package)
    tensors = {layer.name: decompress_layer(layer) for layer in pkg.layers}
    store_checkpoint.save(out, tensors)
    _echo_ratios(pkg)
