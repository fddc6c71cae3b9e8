from typing import Any, Callable, TypeVar, get_args
from pathlib import Path
import click

from schemas.schemas_mwq import WaveletName

F = TypeVar("F", bound=Callable[..., Any])

BASES: list[str] = list(get_args(WaveletName))


class BitsType(click.ParamType):
    """Four comma-separated bit-widths, e.g. `6,2,2,2` (a JSON list in config files)."""

    name = "a,b,c,d"

    def convert(self, value: Any, param: click.Parameter | None, ctx: click.Context | None) -> list[int]:
        if isinstance(value, (list, tuple)):
            items = list(value)
        else:
            items = [item.strip() for item in str(value).split(",")]
        try:
            bits = [int(item) for item in items]
        except (TypeError, ValueError):
            self.fail(f"{value!r} is not a list of integers", param, ctx)
        if len(bits) != 4:
            self.fail(f"expected 4 bit-widths (ll, lh, hl, hh), got {len(bits)}", param, ctx)
        return bits


BITS = BitsType()

ExistingFile = click.Path(exists=True, dir_okay=False, path_type=Path)
OutputFile = click.Path(dir_okay=False, writable=True, path_type=Path)


# --------------------------------------------------------------------------


def basis_option(func: F) -> F:
    return click.option(
        "--basis",
        type=click.Choice(BASES),
        default="haar",
        show_default=True,
        help="Wavelet basis.",
    )(func)


def levels_option(func: F) -> F:
    return click.option(
        "--levels",
        type=click.IntRange(min=1),
        default=1,
        show_default=True,
        help="Decomposition level J.",
    )(func)


def bits_option(default: str | None = "4,4,4,4") -> Callable[[F], F]:
    return click.option(
        "--bits",
        type=BITS,
        default=default,
        show_default=default is not None,
        help="Subband bit-widths [ll, lh, hl, hh].",
    )
