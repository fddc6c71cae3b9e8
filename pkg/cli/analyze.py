from pathlib import Path
import logging
import csv
import click
import numpy as np

from cli.options import ExistingFile, OutputFile, basis_option, bits_option, levels_option
from ops.mwq import mwq_quantize, spatial_quantize, state_histogram, weight_view
from ops.wavelet import supports_shape
from schemas.schemas_mwq import MwqConfig
from store import store_checkpoint

logger: logging.Logger = logging.getLogger(__name__)


def _pick_tensor(tensors: dict[str, np.ndarray], name: str | None, basis: str, levels: int) -> tuple[str, np.ndarray]:
    if name is not None:
        if name not in tensors:
            raise click.BadParameter(
                f"{name!r} is not in the checkpoint (has {', '.join(tensors) or 'nothing'})",
                param_hint="--tensor",
            )
        return name, tensors[name]
    for candidate, tensor in tensors.items():
        if candidate.endswith(".weight") and tensor.ndim >= 2 and supports_shape(weight_view(tensor).shape, basis, levels):
            return candidate, tensor
    raise click.BadParameter("no weight tensor fits the transform", param_hint="--tensor")


@click.command("analyze-states")
@click.option("--model", type=ExistingFile, required=True, help="Checkpoint (MWQC) holding the tensor.")
@click.option("--tensor", "tensor_name", default=None, help="Tensor name; defaults to the first weight that fits.")
@basis_option
@levels_option
@bits_option(default=None)
@click.option("--wbits", type=click.IntRange(2, 32), default=4, show_default=True, help="Spatial baseline bit-width; also the MWQ default.")
@click.option("--tol", type=click.FloatRange(min=0.0), default=1e-6, show_default=True, help="Values closer than this count as one state.")
@click.option("--out", type=OutputFile, required=True, help="Histogram CSV (method,value,count).")
def analyze_states_command(
    model: Path,
    tensor_name: str | None,
    basis: str,
    levels: int,
    bits: list[int] | None,
    wbits: int,
    tol: float,
    out: Path,
) -> None:
    """Count the distinct values of spatial and wavelet quantization of one tensor."""
    cfg = MwqConfig(levels=levels, bits=bits or [wbits] * 4, basis=basis)  # type: ignore[arg-type]
    name, tensor = _pick_tensor(store_checkpoint.load(model), tensor_name, basis, levels)
    matrix = weight_view(tensor)
    histograms = {
        "spatial": state_histogram(spatial_quantize(matrix, wbits), tol),
        "mwq": state_histogram(mwq_quantize(matrix, cfg).xq, tol),
    }
    with out.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "value", "count"])
        for method, histogram in histograms.items():
            writer.writerows((method, repr(value), count) for value, count in histogram)
    logger.info(f"Analyzed {name} {tensor.shape}; histogram written to {out}")
    click.echo("method,states")
    for method, histogram in histograms.items():
        click.echo(f"{method},{len(histogram)}")
