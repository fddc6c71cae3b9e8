from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import Self
from enum import StrEnum
import numpy as np

FULL_PRECISION_BITS: int = 32


class QuantMode(StrEnum):
    SIGNED = "signed"
    UNSIGNED = "unsigned"
    APOT = "apot"


def as_float32(value: float) -> float:
    # Scales live at float32 precision so packed files restore them exactly
    return float(np.float32(value))


class QuantizerSpec(BaseModel):
    bits: int = Field(
        default=Ellipsis,
        description="Bit-width m. 32 is the full-precision sentinel (identity quantizer).",
        json_schema_extra={"example": 4},
        ge=1,
        le=FULL_PRECISION_BITS,
    )

    mode: QuantMode = Field(
        default=QuantMode.SIGNED,
        description="signed: clamp to [-s, s]; unsigned: clamp to [0, s]; apot: additive powers-of-two levels in [-s, s].",
        json_schema_extra={"example": "signed"},
    )

    scale: float | None = Field(
        default=None,
        description="Learnable clip scale s. None until initialised from the data at first use.",
        json_schema_extra={"example": 1.0},
        gt=0.0,
    )

    model_config = ConfigDict(validate_assignment=True)

    @field_validator("scale")
    @classmethod
    def round_scale(cls, value: float | None) -> float | None:
        return None if value is None else as_float32(value)

    @model_validator(mode="after")
    def check_bits(self) -> Self:
        if self.mode is QuantMode.SIGNED and self.bits < 2:
            raise ValueError("signed quantizers need at least 2 bits (sign + magnitude)")
        if self.mode is QuantMode.APOT and self.bits not in (3, 4):
            raise ValueError("apot quantizers support 3 or 4 bits only")
        return self

    # --------------------------------------------------------------------------

    @property
    def is_identity(self) -> bool:
        return self.bits >= FULL_PRECISION_BITS

    @property
    def levels(self) -> int:
        """Per-side level count S."""
        if self.mode is QuantMode.UNSIGNED:
            return 2**self.bits - 1
        return 2 ** (self.bits - 1) - 1

    @property
    def step(self) -> float:
        """Step d = s / S."""
        if self.scale is None:
            raise ValueError("scale is not initialised")
        return self.scale / self.levels

    def with_scale(self, scale: float) -> "QuantizerSpec":
        # model_copy skips validation, keep the float32 rounding explicit
        return self.model_copy(update={"scale": as_float32(scale)})
