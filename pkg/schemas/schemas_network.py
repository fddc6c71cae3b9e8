from pydantic import BaseModel, Field, model_validator
from typing import Literal, Self

from schemas.schemas_mwq import WaveletName
from schemas.schemas_quantizer import FULL_PRECISION_BITS

WeightQuantizer = Literal["none", "uniform", "apot", "mwq"]


class NetworkConfig(BaseModel):
    image_size: Literal[16, 32] = Field(
        default=16,
        description="Side of the square single-channel input images.",
        json_schema_extra={"example": 16},
    )

    num_classes: int = Field(
        default=3,
        description="Number of output classes.",
        json_schema_extra={"example": 3},
        ge=2,
    )

    conv_channels: tuple[int, int] = Field(
        default=(16, 32),
        description="Output channels of the two 3x3 convolutions.",
        json_schema_extra={"example": [16, 32]},
    )

    hidden: int = Field(
        default=128,
        description="Width of the hidden fully-connected layer.",
        json_schema_extra={"example": 128},
        ge=1,
    )

    weight_quantizer: WeightQuantizer = Field(
        default="none",
        description="Weight quantizer of the inner layers.",
        json_schema_extra={"example": "mwq"},
    )

    wbits: int = Field(
        default=FULL_PRECISION_BITS,
        description="Weight bit-width k of the inner layers.",
        json_schema_extra={"example": 4},
        ge=2,
        le=FULL_PRECISION_BITS,
    )

    abits: int = Field(
        default=FULL_PRECISION_BITS,
        description="Activation bit-width (unsigned, after ReLU). 32 disables activation quantization.",
        json_schema_extra={"example": 4},
        ge=1,
        le=FULL_PRECISION_BITS,
    )

    edge_bits: int = Field(
        default=8,
        description="Bit-width of the first conv layer, the last fc layer and the network input.",
        json_schema_extra={"example": 8},
        ge=2,
        le=FULL_PRECISION_BITS,
    )

    basis: WaveletName = Field(
        default="haar",
        description="Wavelet basis of the MWQ weight quantizer.",
        json_schema_extra={"example": "haar"},
    )

    levels: int = Field(
        default=1,
        description="Decomposition level J of the MWQ weight quantizer.",
        json_schema_extra={"example": 1},
        ge=1,
    )

    mwq_bits: list[int] | None = Field(
        default=None,
        description="MWQ subband bit-widths; defaults to [wbits] * 4.",
        json_schema_extra={"example": [4, 4, 4, 4]},
        min_length=4,
        max_length=4,
    )

    enhance: bool = Field(
        default=False,
        description="Insert a high-frequency enhancement layer after the first conv's ReLU.",
        json_schema_extra={"example": False},
    )

    enhance_basis: WaveletName = Field(default="haar", description="Basis of the enhancement layer.")

    enhance_levels: int = Field(default=1, ge=1, description="Level J of the enhancement layer.")

    enhance_alpha: float = Field(
        default=1.2,
        description="Initial high-frequency gain alpha.",
        json_schema_extra={"example": 1.2},
        allow_inf_nan=False,
    )

    @model_validator(mode="after")
    def check_geometry(self) -> Self:
        if any(c < 1 for c in self.conv_channels):
            raise ValueError("conv channels must be positive")
        if self.weight_quantizer == "apot" and self.wbits not in (3, 4):
            raise ValueError("apot weights support 3 or 4 bits only")
        return self

    @property
    def subband_bits(self) -> list[int]:
        return list(self.mwq_bits) if self.mwq_bits is not None else [self.wbits] * 4

    @property
    def quantizes_activations(self) -> bool:
        return self.abits < FULL_PRECISION_BITS
