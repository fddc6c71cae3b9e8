from pathlib import Path
import struct
import gzip
import numpy as np
import pytest

from exc.exceptions import FormatError
from nn.data import load_idx_dir
from store import store_checkpoint
from store.store_bytes import ByteReader
from store.store_idx import IMAGES_MAGIC, LABELS_MAGIC, find_idx, read_idx
from store.store_pgm import read_pgm, to_bytes_affine, to_bytes_clipped, write_pgm


def write_idx(path: Path, array: np.ndarray) -> None:
    magic = 0x0800 | array.ndim
    header = struct.pack(">I", magic) + struct.pack(f">{array.ndim}I", *array.shape)
    data = header + array.astype(np.uint8).tobytes()
    if path.suffix == ".gz":
        with gzip.open(path, "wb") as fh:
            fh.write(data)
    else:
        path.write_bytes(data)


# --------------------------------------------------------------------------


def test_checkpoint_round_trip(tmp_path: Path, rng: np.random.Generator):
    tensors = {
        "conv1.weight": rng.normal(size=(4, 1, 3, 3)).astype(np.float32),
        "conv1.ascale": np.array([0.25], dtype=np.float32),
    }
    path = tmp_path / "ckpt.mwqc"
    store_checkpoint.save(path, tensors)
    loaded = store_checkpoint.load(path)
    assert list(loaded) == list(tensors)
    for name, value in tensors.items():
        assert loaded[name].dtype == np.float32
        np.testing.assert_array_equal(loaded[name], value)


def test_checkpoint_header():
    data = store_checkpoint.encode({"a": np.zeros((2,), dtype=np.float32)})
    assert data[:4] == b"MWQC"
    assert struct.unpack("<H", data[4:6]) == (1,)
    assert len(data) == 4 + 2 + 2 + 1 + 1 + 1 + 4 + 8


def test_checkpoint_rejects_malformed_data():
    data = store_checkpoint.encode({"a": np.ones((3,), dtype=np.float32)})
    with pytest.raises(FormatError):
        store_checkpoint.decode(data[:-2])
    with pytest.raises(FormatError):
        store_checkpoint.decode(b"NOPE" + data[4:])
    bad_tag = bytearray(data)
    bad_tag[9] = 7  # dtype tag after magic, version, name length and name
    with pytest.raises(FormatError):
        store_checkpoint.decode(bytes(bad_tag))
    with pytest.raises(FormatError):
        store_checkpoint.decode(data + data[6:])
    bad_name = bytearray(data)
    bad_name[8] = 0xFF  # the single name byte
    with pytest.raises(FormatError):
        store_checkpoint.decode(bytes(bad_name))


def test_byte_reader():
    reader = ByteReader(struct.pack("<H", 7) + "wé".encode("utf-8"), "sample")
    assert reader.unpack("<H") == (7,)
    assert reader.text(3) == "wé"
    assert reader.exhausted
    with pytest.raises(FormatError, match="truncated sample"):
        reader.take(1)


# --------------------------------------------------------------------------


def test_pgm_round_trip(tmp_path: Path):
    pixels = np.arange(48, dtype=np.uint8).reshape(6, 8)
    path = tmp_path / "x.pgm"
    write_pgm(path, pixels)
    assert path.read_bytes()[:2] == b"P5"
    image = read_pgm(path)
    assert image.dtype == np.float32
    np.testing.assert_array_equal(image, pixels)


def test_read_pgm_rejects_other_files(tmp_path: Path):
    path = tmp_path / "bad.pgm"
    path.write_bytes(b"not an image")
    with pytest.raises(FormatError):
        read_pgm(path)
    with pytest.raises(FormatError):
        write_pgm(tmp_path / "y.pgm", np.zeros((2, 2), dtype=np.float32))


def test_byte_conversions():
    np.testing.assert_array_equal(to_bytes_affine(np.array([[-1.0, 1.0]])), [[0, 255]])
    np.testing.assert_array_equal(to_bytes_affine(np.full((2, 2), 3.0)), np.zeros((2, 2)))
    np.testing.assert_array_equal(to_bytes_clipped(np.array([-4.0, 10.4, 300.0])), [0, 10, 255])


# --------------------------------------------------------------------------


def test_idx_reader(tmp_path: Path):
    images = np.arange(2 * 3 * 3).reshape(2, 3, 3)
    write_idx(tmp_path / "imgs", images)
    np.testing.assert_array_equal(read_idx(tmp_path / "imgs", IMAGES_MAGIC), images)
    with pytest.raises(FormatError):
        read_idx(tmp_path / "imgs", LABELS_MAGIC)
    (tmp_path / "short").write_bytes(b"\x00\x00\x08\x01\x00\x00\x00\x05\x01")
    with pytest.raises(FormatError):
        read_idx(tmp_path / "short")


def test_idx_dataset_loader_pads_and_reads_gzip(tmp_path: Path, rng: np.random.Generator):
    write_idx(tmp_path / "train-images-idx3-ubyte.gz", rng.integers(0, 256, size=(5, 28, 28)))
    write_idx(tmp_path / "train-labels-idx1-ubyte", np.array([0, 1, 2, 3, 4]))
    write_idx(tmp_path / "t10k-images-idx3-ubyte", rng.integers(0, 256, size=(3, 28, 28)))
    write_idx(tmp_path / "t10k-labels-idx1-ubyte", np.array([9, 1, 2]))
    assert find_idx(tmp_path, "train-images-idx3-ubyte").suffix == ".gz"
    data = load_idx_dir(tmp_path, train_size=4)
    assert data.train.images.shape == (4, 1, 32, 32)
    assert data.test.images.shape == (3, 1, 32, 32)
    assert data.num_classes == 10
    assert data.image_size == 32
    assert float(data.train.images.max()) <= 1.0
    assert np.all(data.train.images[:, :, :2, :] == 0)
    with pytest.raises(FileNotFoundError):
        find_idx(tmp_path, "missing")
