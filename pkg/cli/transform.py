from pathlib import Path
import logging
import click
import numpy as np

from cli.options import ExistingFile, OutputFile, basis_option, levels_option
from ops.enhance import EnhanceLayer, enhance
from ops.wavelet import wavedec2
from store.store_pgm import read_pgm, to_bytes_affine, to_bytes_clipped, write_pgm

logger: logging.Logger = logging.getLogger(__name__)


@click.command("dwt")
@basis_option
@levels_option
@click.argument("input_pgm", type=ExistingFile)
@click.argument("outdir", type=click.Path(file_okay=False, path_type=Path))
def dwt_command(basis: str, levels: int, input_pgm: Path, outdir: Path) -> None:
    """Decompose INPUT_PGM and write one viewable PGM per subband to OUTDIR.

    Subbands are rescaled to 0..255 for viewing; subbands.txt keeps the true
    min/max of every subband.
    """
    image = read_pgm(input_pgm)
    sb = wavedec2(image, basis, levels)
    outdir.mkdir(parents=True, exist_ok=True)
    lines: list[str] = []
    for sid, _, _, band in sb.bands():
        write_pgm(outdir / f"{sid}.pgm", to_bytes_affine(band))
        lines.append(f"{sid} {float(band.min())!r} {float(band.max())!r}")
    (outdir / "subbands.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info(f"Wrote {len(lines)} subbands of {input_pgm} to {outdir}")


# --------------------------------------------------------------------------


@click.command("enhance")
@basis_option
@levels_option
@click.option("--alpha", type=float, default=1.2, show_default=True, help="High-frequency gain.")
@click.option("--diff", "diff_pgm", type=OutputFile, default=None, help="Also write |enhanced - input| rescaled to 0..255.")
@click.argument("input_pgm", type=ExistingFile)
@click.argument("output_pgm", type=OutputFile)
def enhance_command(
    basis: str,
    levels: int,
    alpha: float,
    diff_pgm: Path | None,
    input_pgm: Path,
    output_pgm: Path,
) -> None:
    """Scale the high-frequency subbands of INPUT_PGM by ALPHA."""
    layer = EnhanceLayer(basis=basis, levels=levels, alpha=alpha)  # type: ignore[arg-type]
    image = read_pgm(input_pgm)
    enhanced = enhance(image, layer)
    write_pgm(output_pgm, to_bytes_clipped(enhanced))
    if diff_pgm is not None:
        write_pgm(diff_pgm, to_bytes_affine(np.abs(enhanced - image)))
    logger.info(f"Enhanced {input_pgm} with alpha={alpha} into {output_pgm}")
