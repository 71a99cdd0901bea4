"""Dataset ingestion: CIFAR-10 native binary records plus converted SVHN.

Both datasets use the same record layout: 1 label byte followed by 3072 pixel
bytes (three channel-major 1024-byte planes, R then G then B, rows of 32).
Record i occupies file offsets [i*3073, (i+1)*3073).  CIFAR-10 ships this way;
SVHN must be pre-converted (see docs/svhn-conversion.md).
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from . import tensor as T

IMAGE_SIDE = 32
IMAGE_BYTES = 3 * IMAGE_SIDE * IMAGE_SIDE  # 3072
RECORD_BYTES = 1 + IMAGE_BYTES             # 3073
NUM_CLASSES = 10

CIFAR10_TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
CIFAR10_TEST_FILE = "test_batch.bin"
CIFAR10_RECORDS_PER_FILE = 10_000
SVHN_TRAIN_FILE = "svhn_train.bin"
SVHN_TEST_FILE = "svhn_test.bin"
SVHN_FULL_COUNTS = (73_257, 26_032)

DATA_DIR_ENV = "TRIPLENET_DATA_DIR"


class DataFormatError(ValueError):
    """Raised when a record file does not match the expected byte layout."""


@dataclass(frozen=True)
class LabeledImageSet:
    """An immutable set of byte images [N,3,32,32] with labels in [0,10)."""

    images: np.ndarray
    labels: np.ndarray
    split: str
    name: str

    def __post_init__(self):
        if self.images.ndim != 4 or self.images.shape[1:] != (3, IMAGE_SIDE, IMAGE_SIDE):
            raise DataFormatError(f"images must be [N,3,32,32], got {self.images.shape}")
        if self.labels.shape != (self.images.shape[0],):
            raise DataFormatError("labels length must match image count")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= NUM_CLASSES):
            raise DataFormatError(f"labels outside [0, {NUM_CLASSES}): "
                                  f"[{self.labels.min()}, {self.labels.max()}]")

    def __len__(self) -> int:
        return self.images.shape[0]


def read_record_file(path) -> tuple[np.ndarray, np.ndarray]:
    """Parse one record file into (images uint8 [N,3,32,32], labels int64 [N])."""
    blob = Path(path).read_bytes()
    if len(blob) == 0 or len(blob) % RECORD_BYTES != 0:
        raise DataFormatError(
            f"{path}: size {len(blob)} bytes is not a positive multiple of "
            f"{RECORD_BYTES} (1 label byte + {IMAGE_BYTES} pixel bytes)")
    raw = np.frombuffer(blob, dtype=np.uint8).reshape(-1, RECORD_BYTES)
    labels = raw[:, 0].astype(np.int64)
    images = raw[:, 1:].reshape(-1, 3, IMAGE_SIDE, IMAGE_SIDE).copy()
    return images, labels


def write_record_file(path, images: np.ndarray, labels: np.ndarray) -> None:
    """Inverse of read_record_file; used by fixtures and the SVHN converter."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    if images.ndim != 4 or images.shape[1:] != (3, IMAGE_SIDE, IMAGE_SIDE):
        raise DataFormatError(f"images must be [N,3,32,32], got {images.shape}")
    if labels.shape != (images.shape[0],):
        raise DataFormatError("labels length must match image count")
    rec = np.empty((images.shape[0], RECORD_BYTES), dtype=np.uint8)
    rec[:, 0] = labels
    rec[:, 1:] = images.reshape(images.shape[0], IMAGE_BYTES)
    Path(path).write_bytes(rec.tobytes())


def _read_exact(path, expected_records: int) -> tuple[np.ndarray, np.ndarray]:
    actual = os.path.getsize(path)
    expected = expected_records * RECORD_BYTES
    if actual != expected:
        raise DataFormatError(f"{path}: expected {expected} bytes "
                              f"({expected_records} records), found {actual}")
    return read_record_file(path)


def load_cifar10(data_dir) -> tuple[LabeledImageSet, LabeledImageSet]:
    """Load the official CIFAR-10 binary distribution (five train files + test)."""
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise FileNotFoundError(f"CIFAR-10 directory not found: {data_dir}")
    images, labels = [], []
    for fname in CIFAR10_TRAIN_FILES:
        im, lb = _read_exact(data_dir / fname, CIFAR10_RECORDS_PER_FILE)
        images.append(im)
        labels.append(lb)
    train = LabeledImageSet(np.concatenate(images), np.concatenate(labels),
                            "train", "cifar10")
    im, lb = _read_exact(data_dir / CIFAR10_TEST_FILE, CIFAR10_RECORDS_PER_FILE)
    test = LabeledImageSet(im, lb, "test", "cifar10")
    return train, test


def load_svhn(data_dir) -> tuple[LabeledImageSet, LabeledImageSet]:
    """Load SVHN from its converted CIFAR-style record files (any record count)."""
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise FileNotFoundError(f"SVHN directory not found: {data_dir}")
    im, lb = read_record_file(data_dir / SVHN_TRAIN_FILE)
    train = LabeledImageSet(im, lb, "train", "svhn")
    im, lb = read_record_file(data_dir / SVHN_TEST_FILE)
    test = LabeledImageSet(im, lb, "test", "svhn")
    return train, test


def load_dataset(name: str, data_dir) -> tuple[LabeledImageSet, LabeledImageSet]:
    if name == "cifar10":
        return load_cifar10(data_dir)
    if name == "svhn":
        return load_svhn(data_dir)
    raise ValueError(f"unknown dataset {name!r}; expected 'cifar10' or 'svhn'")


def subset(dataset: LabeledImageSet, n: int) -> LabeledImageSet:
    """First-n examples, for smoke runs."""
    if n < 1 or n > len(dataset):
        raise ValueError(f"subset size {n} outside [1, {len(dataset)}]")
    return LabeledImageSet(dataset.images[:n], dataset.labels[:n],
                           dataset.split, dataset.name)


# ---------------------------------------------------------------------------
# normalization statistics

def channel_stats(dataset: LabeledImageSet) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean/std of the byte images mapped to [0, 1]."""
    scaled = dataset.images.astype(np.float64) / 255.0
    return (scaled.mean(axis=(0, 2, 3)).astype(np.float32),
            scaled.std(axis=(0, 2, 3)).astype(np.float32))


def save_stats(path, mean: np.ndarray, std: np.ndarray) -> None:
    lines = [f"mean_{c}: {v:.8f}" for c, v in zip("rgb", mean)]
    lines += [f"std_{c}: {v:.8f}" for c, v in zip("rgb", std)]
    Path(path).write_text("\n".join(lines) + "\n")


def load_stats(path) -> tuple[np.ndarray, np.ndarray]:
    values = {}
    for line in Path(path).read_text().splitlines():
        if line.strip():
            key, val = line.split(":")
            values[key.strip()] = float(val)
    mean = np.array([values[f"mean_{c}"] for c in "rgb"], dtype=np.float32)
    std = np.array([values[f"std_{c}"] for c in "rgb"], dtype=np.float32)
    return mean, std


# ---------------------------------------------------------------------------
# batching

def batches(dataset: LabeledImageSet, batch_size: int, shuffle: bool = False,
            seed: int = 0, mean: Optional[np.ndarray] = None,
            std: Optional[np.ndarray] = None
            ) -> Iterator[tuple[T.Tensor, np.ndarray]]:
    """Yield (float32 Tensor [B,3,32,32], labels) covering every example once.

    Pixels map byte -> [0,1]; if per-channel mean/std are given the result is
    standardized.  Shuffling is a seed-deterministic permutation; the final
    batch may be short.
    """
    n = len(dataset)
    if n == 0:
        raise ValueError("cannot batch an empty dataset")
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    order = (np.random.default_rng(seed).permutation(n) if shuffle
             else np.arange(n))
    if mean is not None:
        mean = np.asarray(mean, dtype=np.float32).reshape(1, 3, 1, 1)
        std = np.asarray(std, dtype=np.float32).reshape(1, 3, 1, 1)
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        x = dataset.images[idx].astype(np.float32) / 255.0
        if mean is not None:
            x = (x - mean) / std
        yield T.Tensor(x), dataset.labels[idx]
