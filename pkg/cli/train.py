from pathlib import Path
from typing import Literal
import logging
import csv
import sys
import click

from cli.options import ExistingFile, OutputFile, basis_option, bits_option, levels_option
from core import settings
from exc.exceptions import ConfigError
from nn.data import Dataset, load_idx_dir, shapes_dataset
from nn.network import Network, build_network, network_from_tensors, network_to_tensors
from nn.train import spatial_from_mwq, train, two_stage_train, check_stage_configs
from schemas.schemas_network import NetworkConfig
from schemas.schemas_train import MetricRow, TrainConfig
from store import store_checkpoint

logger: logging.Logger = logging.getLogger(__name__)

# Stage 2 of a `both` run fine-tunes at a tenth of the stage-1 learning rate
STAGE2_LR_FACTOR: float = 0.1


def _write_metrics(rows: list[MetricRow], path: Path | None) -> None:
    fields = list(MetricRow.model_fields)
    if path is None:
        writer = csv.DictWriter(sys.stdout, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        writer.writerows(row.model_dump() for row in rows)
        return
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(row.model_dump() for row in rows)


def _require_checkpoint(ckpt_in: Path | None) -> Path:
    if ckpt_in is None:
        raise ConfigError(
            "--stage 2 needs --ckpt-in with the stage-1 checkpoint",
            hint="Run --stage 1 with --ckpt-out first.",
        )
    return ckpt_in


def _load_data(data_dir: Path | None, train_size: int, test_size: int, seed: int) -> Dataset:
    if data_dir is None:
        return shapes_dataset(train_size=train_size, test_size=test_size, seed=seed)
    return load_idx_dir(data_dir, train_size=train_size, test_size=test_size)


# --------------------------------------------------------------------------


@click.command("train")
@click.option("--stage", type=click.Choice(["1", "2", "both"]), default="both", show_default=True)
@click.option(
    "--quantizer",
    type=click.Choice(["uniform", "apot", "mwq"]),
    default=None,
    help="Weight quantizer: defaults to mwq for --stage 1, otherwise the stage-2 spatial quantizer (uniform).",
)
@click.option("--wbits", type=click.IntRange(2, 32), default=4, show_default=True)
@click.option("--abits", type=click.IntRange(1, 32), default=4, show_default=True)
@basis_option
@levels_option
@bits_option(default=None)
@click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True)
@click.option("--data", "data_dir", type=click.Path(exists=True, file_okay=False, path_type=Path), default=None, help="Directory with MNIST-layout IDX files; the synthetic shapes set otherwise.")
@click.option("--ckpt-in", type=ExistingFile, default=None, help="Initial checkpoint (the stage-1 result for --stage 2).")
@click.option("--ckpt-out", type=OutputFile, default=None, help="Checkpoint of the final network.")
@click.option("--epochs", type=click.IntRange(min=1), default=10, show_default=True)
@click.option("--lr", type=click.FloatRange(min=0.0, min_open=True), default=1e-2, show_default=True)
@click.option("--batch-size", type=click.IntRange(min=1), default=32, show_default=True)
@click.option("--train-size", type=click.IntRange(min=1), default=600, show_default=True)
@click.option("--test-size", type=click.IntRange(min=1), default=300, show_default=True)
@click.option("--enhance/--no-enhance", default=False, show_default=True, help="Enhancement layer after the first conv.")
@click.option("--metrics", type=OutputFile, default=None, help="Metric CSV; printed to stdout when omitted.")
def train_command(
    stage: Literal["1", "2", "both"],
    quantizer: str | None,
    wbits: int,
    abits: int,
    basis: str,
    levels: int,
    bits: list[int] | None,
    seed: int,
    data_dir: Path | None,
    ckpt_in: Path | None,
    ckpt_out: Path | None,
    epochs: int,
    lr: float,
    batch_size: int,
    train_size: int,
    test_size: int,
    enhance: bool,
    metrics: Path | None,
) -> None:
    """Train the toy CNN: stage 1 with MWQ weights, stage 2 spatially quantized."""
    if stage != "1" and quantizer == "mwq":
        raise click.BadParameter("stage 2 fine-tunes a spatial quantizer (uniform or apot)", param_hint="--quantizer")
    if stage == "2":
        _require_checkpoint(ckpt_in)

    data = _load_data(data_dir, train_size, test_size, seed)
    common = dict(
        image_size=data.image_size,
        num_classes=data.num_classes,
        wbits=wbits,
        abits=abits,
        basis=basis,
        levels=levels,
        mwq_bits=bits,
        enhance=enhance,
    )
    mwq_cfg = NetworkConfig(weight_quantizer="mwq", **common)  # type: ignore[arg-type]
    spatial_cfg = NetworkConfig(weight_quantizer=quantizer or "uniform", **common)  # type: ignore[arg-type]
    schedule = dict(epochs=epochs, batch_size=batch_size, seed=seed)
    stage1 = TrainConfig(lr=lr, stage=1, **schedule)  # type: ignore[arg-type]
    stage2 = TrainConfig(lr=lr if stage == "2" else lr * STAGE2_LR_FACTOR, stage=2, **schedule)  # type: ignore[arg-type]

    rows: list[MetricRow]
    final: Network
    if stage == "1":
        cfg = NetworkConfig(weight_quantizer=quantizer or "mwq", **common)  # type: ignore[arg-type]
        net = network_from_tensors(cfg, store_checkpoint.load(ckpt_in)) if ckpt_in else build_network(cfg, seed=seed)
        final, rows = train(net, data, stage1, eval_threads=settings.MWQ_THREADS)
    elif stage == "2":
        check_stage_configs(mwq_cfg, spatial_cfg)
        first = network_from_tensors(mwq_cfg, store_checkpoint.load(_require_checkpoint(ckpt_in)))
        final, rows = train(spatial_from_mwq(first, spatial_cfg), data, stage2, eval_threads=settings.MWQ_THREADS)
    else:
        init = network_from_tensors(mwq_cfg, store_checkpoint.load(ckpt_in)) if ckpt_in else None
        result = two_stage_train(
            mwq_cfg, spatial_cfg, data, stage1, stage2, init=init, eval_threads=settings.MWQ_THREADS
        )
        final, rows = result.network, result.metrics

    _write_metrics(rows, metrics)
    if ckpt_out is not None:
        store_checkpoint.save(ckpt_out, network_to_tensors(final))
