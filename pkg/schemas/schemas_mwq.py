from pydantic import BaseModel, Field, field_validator
from typing import Literal
import re

from schemas.schemas_quantizer import FULL_PRECISION_BITS, as_float32

WaveletName = Literal["haar", "db2", "sym2", "coif2"]
Orientation = Literal["ll", "lh", "hl", "hh"]

ORIENTATIONS: tuple[Orientation, ...] = ("ll", "lh", "hl", "hh")
HIGH_ORIENTATIONS: tuple[Orientation, ...] = ("lh", "hl", "hh")

_SUBBAND_ID = re.compile(r"^(ll|lh|hl|hh)([1-9][0-9]*)$")


def subband_id(level: int, orientation: Orientation) -> str:
    return f"{orientation}{level}"


def parse_subband_id(sid: str) -> tuple[int, Orientation]:
    match = _SUBBAND_ID.match(sid)
    if match is None:
        raise ValueError(f"not a subband id: {sid!r}")
    orientation: Orientation = match.group(1)  # type: ignore[assignment]
    return int(match.group(2)), orientation


# --------------------------------------------------------------------------


class BitAllocation(BaseModel):
    levels: int = Field(
        default=1,
        description="Decomposition level J.",
        json_schema_extra={"example": 1},
        ge=1,
    )

    bits: list[int] = Field(
        default=Ellipsis,
        description="Bit-widths [b_ll, b_lh, b_hl, b_hh]; for J >= 2 the three high entries apply to their orientation at every level.",
        json_schema_extra={"example": [6, 2, 2, 2]},
        min_length=4,
        max_length=4,
    )

    @field_validator("bits")
    @classmethod
    def check_bit_range(cls, bits: list[int]) -> list[int]:
        for b in bits:
            if not 1 <= b <= FULL_PRECISION_BITS:
                raise ValueError(f"bit-width {b} outside 1..{FULL_PRECISION_BITS}")
        return bits

    def bits_for(self, orientation: Orientation) -> int:
        return self.bits[ORIENTATIONS.index(orientation)]

    def subband_ids(self) -> list[str]:
        """Ids in canonical order: ll{J}, then lh/hl/hh from level J down to 1."""
        ids = [subband_id(self.levels, "ll")]
        for level in range(self.levels, 0, -1):
            ids.extend(subband_id(level, o) for o in HIGH_ORIENTATIONS)
        return ids

    @staticmethod
    def coefficient_fraction(level: int) -> float:
        # Every subband at level j holds 1/4^j of the coefficients
        return 1.0 / 4**level

    def mean_bits(self) -> float:
        total = 0.0
        for sid in self.subband_ids():
            level, orientation = parse_subband_id(sid)
            total += self.coefficient_fraction(level) * self.bits_for(orientation)
        return total


class MwqConfig(BitAllocation):
    basis: WaveletName = Field(
        default="haar",
        description="Wavelet basis name.",
        json_schema_extra={"example": "coif2"},
    )

    scales: dict[str, float] = Field(
        default_factory=dict,
        description="Learnable clip scale per subband id (e.g. 'll1', 'hh2'); missing entries are initialised to max|subband| at first use.",
        json_schema_extra={"example": {"ll1": 0.8, "lh1": 0.2}},
    )

    @field_validator("bits")
    @classmethod
    def check_signed_bits(cls, bits: list[int]) -> list[int]:
        # signed quantizers need a sign bit plus magnitude
        for b in bits:
            if b < 2:
                raise ValueError(f"subband bit-width {b} < 2")
        return bits

    @field_validator("scales")
    @classmethod
    def check_scales(cls, scales: dict[str, float]) -> dict[str, float]:
        checked: dict[str, float] = {}
        for sid, s in scales.items():
            parse_subband_id(sid)
            if not s > 0.0:
                raise ValueError(f"scale of {sid} must be positive, got {s}")
            checked[sid] = as_float32(s)
        return checked

    def with_scales(self, scales: dict[str, float]) -> "MwqConfig":
        return self.model_copy(
            update={"scales": {sid: as_float32(s) for sid, s in scales.items()}}
        )
