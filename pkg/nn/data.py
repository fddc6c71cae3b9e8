from dataclasses import dataclass
from pathlib import Path
from typing import Iterator
import logging
import numpy as np

from exc.exceptions import FormatError, ShapeError
from store.store_idx import IMAGES_MAGIC, LABELS_MAGIC, find_idx, read_idx

logger: logging.Logger = logging.getLogger(__name__)

SHAPE_CLASSES: tuple[str, ...] = ("rectangle", "cross", "circle")
IDX_FILES: dict[str, tuple[str, str]] = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


@dataclass(frozen=True)
class Split:
    images: np.ndarray  # [N, 1, S, S] float32 in [0, 1]
    labels: np.ndarray  # [N] int64

    def __post_init__(self) -> None:
        if self.images.ndim != 4 or self.images.shape[0] != self.labels.shape[0]:
            raise ShapeError(
                f"split with images {self.images.shape} and labels {self.labels.shape}"
            )

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def take(self, count: int | None) -> "Split":
        if count is None or count >= len(self):
            return self
        return Split(self.images[:count], self.labels[:count])


@dataclass(frozen=True)
class Dataset:
    train: Split
    test: Split
    num_classes: int

    @property
    def image_size(self) -> int:
        return int(self.train.images.shape[-1])


def iter_batches(split: Split, batch_size: int, order: np.ndarray | None = None) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    order = np.arange(len(split)) if order is None else order
    for start in range(0, order.shape[0], batch_size):
        idx = order[start : start + batch_size]
        yield split.images[idx], split.labels[idx]


# --------------------------------------------------------------------------


def _draw(kind: int, size: int, rng: np.random.Generator) -> np.ndarray:
    rows, cols = np.ogrid[:size, :size]
    img = np.zeros((size, size), dtype=np.float32)
    if kind == 0:
        h, w = rng.integers(size // 3, size - 3, size=2)
        top, left = rng.integers(0, size - h + 1), rng.integers(0, size - w + 1)
        img[top : top + h, left : left + w] = 1.0
        img[top + 1 : top + h - 1, left + 1 : left + w - 1] = 0.0
    elif kind == 1:
        arm = int(rng.integers(3, size // 3 + 1))
        cy, cx = rng.integers(arm, size - arm, size=2)
        img[cy - arm : cy + arm + 1, cx] = 1.0
        img[cy, cx - arm : cx + arm + 1] = 1.0
    else:
        radius = float(rng.uniform(3.0, size / 2 - 1.5))
        cy, cx = rng.uniform(radius, size - 1 - radius, size=2)
        dist = np.sqrt((rows - cy) ** 2 + (cols - cx) ** 2)
        img[np.abs(dist - radius) < 0.75] = 1.0
    return img


def shapes_dataset(
    train_size: int = 600,
    test_size: int = 300,
    size: int = 16,
    seed: int = 0,
    noise: float = 0.05,
) -> Dataset:
    """Seeded rectangles (outlines), crosses and circles (rings) on size x size grids.

    Classes are balanced and interleaved before shuffling; light Gaussian
    noise is added and values are clipped to [0, 1].
    """
    if train_size < 1 or test_size < 1:
        raise ShapeError("shapes dataset needs at least one train and one test image")
    rng = np.random.default_rng(seed)
    total = train_size + test_size
    labels = rng.permutation(np.arange(total) % len(SHAPE_CLASSES)).astype(np.int64)
    images = np.stack([_draw(int(k), size, rng) for k in labels])
    images += rng.normal(0.0, noise, size=images.shape).astype(np.float32)
    images = np.clip(images, 0.0, 1.0)[:, None]
    return Dataset(
        train=Split(images[:train_size], labels[:train_size]),
        test=Split(images[train_size:], labels[train_size:]),
        num_classes=len(SHAPE_CLASSES),
    )


# --------------------------------------------------------------------------


def _load_split(directory: Path, split: str, pad_to: int) -> Split:
    image_stem, label_stem = IDX_FILES[split]
    images = read_idx(find_idx(directory, image_stem), IMAGES_MAGIC)
    labels = read_idx(find_idx(directory, label_stem), LABELS_MAGIC)
    if images.ndim != 3 or labels.ndim != 1 or images.shape[0] != labels.shape[0]:
        raise FormatError(f"{split} images {images.shape} do not match labels {labels.shape}")
    h, w = images.shape[1:]
    if h > pad_to or w > pad_to:
        raise FormatError(f"{split} images are {h}x{w}, larger than {pad_to}x{pad_to}")
    top, left = (pad_to - h) // 2, (pad_to - w) // 2
    padded = np.zeros((images.shape[0], 1, pad_to, pad_to), dtype=np.float32)
    padded[:, 0, top : top + h, left : left + w] = images.astype(np.float32) / 255.0
    return Split(padded, labels.astype(np.int64))


def load_idx_dir(
    directory: str | Path,
    train_size: int | None = None,
    test_size: int | None = None,
    pad_to: int = 32,
) -> Dataset:
    """Loads MNIST-layout IDX files; 28x28 images are zero-padded to 32x32."""
    directory = Path(directory)
    train = _load_split(directory, "train", pad_to).take(train_size)
    test = _load_split(directory, "test", pad_to).take(test_size)
    num_classes = int(max(train.labels.max(), test.labels.max())) + 1
    logger.info(f"Loaded {len(train)} train / {len(test)} test images from {directory}")
    return Dataset(train=train, test=test, num_classes=max(num_classes, 2))
