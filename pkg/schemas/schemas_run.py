from pydantic import BaseModel, Field, ValidationInfo, field_validator, model_validator
from typing import Any, Self


class RunConfig(BaseModel):
    subcommand: str = Field(
        default=Ellipsis,
        description="The invoked subcommand.",
        json_schema_extra={"example": "train"},
    )

    options: dict[str, Any] = Field(
        default_factory=dict,
        description="Option defaults read from a JSON config file; keys mirror the subcommand's flags.",
        json_schema_extra={"example": {"seed": 3, "wbits": 4}},
    )

    @field_validator("options", mode="before")
    @classmethod
    def normalise_keys(cls, options: Any) -> Any:
        if not isinstance(options, dict):
            return options
        # "--ckpt-out", "ckpt-out" and "ckpt_out" all name the same option
        return {str(k).lstrip("-").replace("-", "_"): v for k, v in options.items()}

    @model_validator(mode="after")
    def reject_unknown(self, info: ValidationInfo) -> Self:
        allowed: set[str] | None = (info.context or {}).get("allowed")
        if allowed is not None:
            unknown = sorted(set(self.options) - allowed)
            if unknown:
                raise ValueError(
                    f"unknown option(s) for '{self.subcommand}': {', '.join(unknown)}"
                )
        return self
