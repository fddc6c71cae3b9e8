from pathlib import Path
from click.testing import CliRunner
from PIL import Image
import numpy as np
import pytest

from nn.data import Dataset, shapes_dataset
from nn.network import build_network, network_to_tensors
from schemas.schemas_network import NetworkConfig
from store import store_checkpoint

# 1. Tiny problem sizes keep the suite in seconds


@pytest.fixture
def rng() -> np.random.Generator:
    """Fresh seeded generator for each test."""
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_data() -> Dataset:
    return shapes_dataset(train_size=48, test_size=24, seed=7)


@pytest.fixture
def tiny_net_config() -> NetworkConfig:
    return NetworkConfig(conv_channels=(4, 8), hidden=16)


@pytest.fixture
def pgm_file(tmp_path: Path, rng: np.random.Generator) -> Path:
    """A 16x16 8-bit grayscale PGM with a smooth gradient and some noise."""
    ramp = np.add.outer(np.arange(16), np.arange(16)) * 7.0
    pixels = np.clip(ramp + rng.normal(0, 4, size=ramp.shape), 0, 255).astype(np.uint8)
    path = tmp_path / "input.pgm"
    Image.fromarray(pixels).save(path, format="PPM")
    return path


@pytest.fixture
def checkpoint_file(tmp_path: Path) -> Path:
    """Checkpoint of a freshly initialised full-precision toy network."""
    net = build_network(NetworkConfig(), seed=3)
    path = tmp_path / "model.mwqc"
    store_checkpoint.save(path, network_to_tensors(net))
    return path


@pytest.fixture
def runner() -> CliRunner:
    return CliRunner()
