"""SGD training and the two-stage MWQ -> spatial optimisation."""

from dataclasses import dataclass
import logging
import numpy as np

from exc.exceptions import ConfigError, NonFiniteInputError, TrainingDivergedError
from nn.data import Dataset, iter_batches
from nn.layers import Gradients
from nn.network import (
    ENHANCE_NAME,
    MIN_SCALE,
    Network,
    assign_parameter,
    backward_quantized,
    build_network,
    evaluate,
    forward_quantized,
    named_parameters,
    softmax_cross_entropy,
)
from schemas.schemas_network import NetworkConfig
from schemas.schemas_train import MetricRow, TrainConfig

logger: logging.Logger = logging.getLogger(__name__)

SPATIAL_QUANTIZERS: tuple[str, ...] = ("uniform", "apot")


def _is_scale(name: str) -> bool:
    attr = name.split(".", 1)[1]
    return attr == "ascale" or attr == "wscale" or attr.startswith("wscale.")


class SGD:
    """SGD with momentum. Weight decay applies to `.weight` tensors only."""

    def __init__(self, momentum: float = 0.9, weight_decay: float = 0.0) -> None:
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity: dict[str, np.ndarray] = {}

    def step(self, net: Network, grads: Gradients, lr: float) -> None:
        params = named_parameters(net)
        # Sorted names fix the update order
        for name in sorted(grads):
            grad = grads[name]
            value = params[name]
            if self.weight_decay and name.endswith(".weight"):
                grad = grad + self.weight_decay * value
            velocity = self.velocity.get(name)
            velocity = grad if velocity is None else self.momentum * velocity + grad
            self.velocity[name] = velocity
            updated = value - lr * velocity
            if _is_scale(name):
                updated = np.maximum(updated, MIN_SCALE)
            assign_parameter(net, name, np.asarray(updated, dtype=value.dtype))
        net.touch()


# --------------------------------------------------------------------------


def _first_non_finite(net: Network, grads: Gradients | None = None) -> str | None:
    for source in (named_parameters(net), grads or {}):
        for name, value in source.items():
            if not np.all(np.isfinite(value)):
                return name
    return None


def _diverged(net: Network, step: int, reason: str, grads: Gradients | None = None) -> TrainingDivergedError:
    layer = _first_non_finite(net, grads) or "loss"
    logger.error(f"Training diverged at step {step} in {layer}: {reason}")
    return TrainingDivergedError(
        f"training diverged: {reason}",
        layer=layer,
        step=step,
        hint="Lower --lr or raise the bit-widths.",
    )


def train(net: Network, data: Dataset, cfg: TrainConfig, eval_threads: int = 1) -> tuple[Network, list[MetricRow]]:
    """Trains `net` in place and returns it with one metric row per epoch.

    Deterministic for a fixed seed: one generator drives the shuffles and
    every reduction runs in a fixed order.
    """
    if len(data.train) == 0 or len(data.test) == 0:
        raise ConfigError("training needs non-empty train and test splits")
    rng = np.random.default_rng(cfg.seed)
    optimizer = SGD(momentum=cfg.momentum, weight_decay=cfg.weight_decay)
    metrics: list[MetricRow] = []
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        lr = cfg.lr_at(epoch)
        total_loss = 0.0
        for images, labels in iter_batches(data.train, cfg.batch_size, rng.permutation(len(data.train))):
            step += 1
            try:
                logits, cache = forward_quantized(images, net)
            except NonFiniteInputError as e:
                raise _diverged(net, step, str(e)) from e
            loss, grad_logits = softmax_cross_entropy(logits, labels)
            if not np.isfinite(loss):
                raise _diverged(net, step, f"loss is {loss}")
            grads = backward_quantized(cache, grad_logits)
            bad = _first_non_finite(net, grads)
            if bad is not None:
                raise _diverged(net, step, f"non-finite gradient in {bad}", grads)
            optimizer.step(net, grads, lr)
            total_loss += loss * labels.shape[0]
        test_accuracy, test_loss = evaluate(net, data.test, threads=eval_threads)
        row = MetricRow(
            stage=cfg.stage,
            epoch=epoch,
            lr=lr,
            train_loss=total_loss / len(data.train),
            test_loss=test_loss,
            test_accuracy=test_accuracy,
        )
        metrics.append(row)
        logger.info(
            f"stage {row.stage} epoch {epoch}/{cfg.epochs} lr={lr:g} "
            f"train_loss={row.train_loss:.4f} test_loss={test_loss:.4f} test_acc={test_accuracy:.4f}"
        )
    return net, metrics


# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TwoStageResult:
    network: Network
    metrics: list[MetricRow]
    stage1: Network | None


def check_stage_configs(stage1_cfg: NetworkConfig, stage2_cfg: NetworkConfig, skip_stage1: bool = False) -> None:
    if stage2_cfg.weight_quantizer not in SPATIAL_QUANTIZERS:
        raise ConfigError(f"stage 2 needs a spatial weight quantizer, got {stage2_cfg.weight_quantizer!r}")
    if skip_stage1:
        return
    if stage1_cfg.weight_quantizer != "mwq":
        raise ConfigError(f"stage 1 needs the mwq weight quantizer, got {stage1_cfg.weight_quantizer!r}")
    if (stage1_cfg.wbits, stage1_cfg.abits) != (stage2_cfg.wbits, stage2_cfg.abits):
        raise ConfigError(
            f"stages must share k: stage 1 has w{stage1_cfg.wbits}/a{stage1_cfg.abits}, "
            f"stage 2 has w{stage2_cfg.wbits}/a{stage2_cfg.abits}",
            hint="Use the same --wbits and --abits for both stages.",
        )
    geometry = ("image_size", "num_classes", "conv_channels", "hidden", "edge_bits", "enhance")
    for key in geometry:
        if getattr(stage1_cfg, key) != getattr(stage2_cfg, key):
            raise ConfigError(f"stages disagree on {key}")


def spatial_from_mwq(stage1: Network, stage2_cfg: NetworkConfig) -> Network:
    """Stage-2 initial network: stage-1 weights, biases, activation scales and
    enhancement gain; weight scales re-initialise from the copied weights."""
    net = build_network(stage2_cfg)
    for name, value in named_parameters(stage1).items():
        if name.endswith((".weight", ".bias")):
            assign_parameter(net, name, value.copy())
        elif name.endswith(".ascale") or name == f"{ENHANCE_NAME}.alpha":
            assign_parameter(net, name, value)
    return net


def two_stage_train(
    stage1_cfg: NetworkConfig,
    stage2_cfg: NetworkConfig,
    data: Dataset,
    stage1: TrainConfig,
    stage2: TrainConfig,
    skip_stage1: bool = False,
    init: Network | None = None,
    eval_threads: int = 1,
) -> TwoStageResult:
    """Stage 1 trains an MWQ network, stage 2 fine-tunes its spatial twin.

    With `skip_stage1` the spatial network trains directly from its seeded
    initialisation on the stage-1 schedule (the baseline without MWQ).
    """
    check_stage_configs(stage1_cfg, stage2_cfg, skip_stage1)
    if skip_stage1:
        net = init if init is not None else build_network(stage2_cfg, seed=stage1.seed)
        net, metrics = train(net, data, stage1, eval_threads)
        return TwoStageResult(network=net, metrics=metrics, stage1=None)
    first = init if init is not None else build_network(stage1_cfg, seed=stage1.seed)
    first, metrics1 = train(first, data, stage1, eval_threads)
    second = spatial_from_mwq(first, stage2_cfg)
    second, metrics2 = train(second, data, stage2, eval_threads)
    return TwoStageResult(network=second, metrics=metrics1 + metrics2, stage1=first)
