from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing import Literal, Self


class TrainConfig(BaseModel):
    epochs: int = Field(
        default=10,
        description="Number of epochs L.",
        json_schema_extra={"example": 10},
        ge=1,
    )

    batch_size: int = Field(
        default=32,
        description="Mini-batch size.",
        json_schema_extra={"example": 32},
        ge=1,
    )

    lr: float = Field(
        default=1e-2,
        description="Initial learning rate.",
        json_schema_extra={"example": 1e-2},
        gt=0.0,
    )

    lr_decay_epochs: list[int] = Field(
        default_factory=list,
        description="1-based epochs after which the learning rate is multiplied by lr_decay_factor.",
        json_schema_extra={"example": [10, 25, 40]},
    )

    lr_decay_factor: float = Field(
        default=0.1,
        description="Multiplicative learning-rate decay.",
        json_schema_extra={"example": 0.1},
        gt=0.0,
    )

    momentum: float = Field(
        default=0.9,
        description="SGD momentum; 0 gives plain SGD.",
        json_schema_extra={"example": 0.9},
        ge=0.0,
        lt=1.0,
    )

    weight_decay: float = Field(
        default=0.0,
        description="L2 penalty on weights (never on clip scales or enhancement gains).",
        json_schema_extra={"example": 0.0},
        ge=0.0,
    )

    seed: int = Field(
        default=0,
        description="Seed of the shuffling and initialisation generators.",
        json_schema_extra={"example": 0},
        ge=0,
    )

    stage: Literal[1, 2] = Field(
        default=1,
        description="Stage tag written to the metric log.",
        json_schema_extra={"example": 1},
    )

    @model_validator(mode="after")
    def check_schedule(self) -> Self:
        previous = 0
        for epoch in self.lr_decay_epochs:
            if epoch <= previous:
                raise ValueError("lr decay epochs must be strictly increasing and positive")
            previous = epoch
        if self.lr_decay_epochs and self.lr_decay_epochs[-1] >= self.epochs:
            raise ValueError("lr decay epochs must be smaller than the number of epochs")
        return self

    def lr_at(self, epoch: int) -> float:
        """Learning rate used during the 1-based `epoch`."""
        decays = sum(1 for d in self.lr_decay_epochs if epoch > d)
        return self.lr * self.lr_decay_factor**decays


# --------------------------------------------------------------------------


class MetricRow(BaseModel):
    stage: int
    epoch: int
    lr: float
    train_loss: float
    test_loss: float
    test_accuracy: float

    model_config = ConfigDict(frozen=True)
