"""MNIST IDX reader (big-endian headers, raw uint8 payload)."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
ENV_VAR = "REAP_MNIST_DIR"

FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


class IngestionError(ValueError):
    pass


@dataclass
class Split:
    images: np.ndarray  # (N, 28, 28) float32 in [0, 1]
    labels: np.ndarray  # (N,) int64

    def __len__(self):
        return len(self.labels)


@dataclass
class MnistDataset:
    train: Split
    test: Split


def _read(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except FileNotFoundError:
        raise IngestionError(f"MNIST file not found: {path}") from None


def read_idx_images(path: str | Path) -> np.ndarray:
    path = Path(path)
    raw = _read(path)
    if len(raw) < 16:
        raise IngestionError(f"{path}: truncated header, expected 16 bytes, got {len(raw)}")
    magic, count, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IMAGE_MAGIC:
        raise IngestionError(f"{path}: bad magic number 0x{magic:08x}, expected 0x{IMAGE_MAGIC:08x}")
    expected = 16 + count * rows * cols
    if len(raw) != expected:
        raise IngestionError(f"{path}: truncated file, expected {expected} bytes, got {len(raw)}")
    return np.frombuffer(raw, dtype=np.uint8, offset=16).reshape(count, rows, cols)


def read_idx_labels(path: str | Path) -> np.ndarray:
    path = Path(path)
    raw = _read(path)
    if len(raw) < 8:
        raise IngestionError(f"{path}: truncated header, expected 8 bytes, got {len(raw)}")
    magic, count = struct.unpack(">II", raw[:8])
    if magic != LABEL_MAGIC:
        raise IngestionError(f"{path}: bad magic number 0x{magic:08x}, expected 0x{LABEL_MAGIC:08x}")
    expected = 8 + count
    if len(raw) != expected:
        raise IngestionError(f"{path}: truncated file, expected {expected} bytes, got {len(raw)}")
    labels = np.frombuffer(raw, dtype=np.uint8, offset=8)
    if labels.size and labels.max() > 9:
        raise IngestionError(f"{path}: label {labels.max()} outside 0-9")
    return labels


def resolve_dir(data_dir: str | Path | None) -> Path:
    if data_dir is None:
        data_dir = os.environ.get(ENV_VAR)
    if data_dir is None:
        raise IngestionError(f"no MNIST directory given and ${ENV_VAR} is unset")
    return Path(data_dir)


def _split(images: np.ndarray, labels: np.ndarray, name: str, expected: int | None) -> Split:
    if len(images) != len(labels):
        raise IngestionError(f"{name}: {len(images)} images but {len(labels)} labels")
    if expected is not None and len(images) != expected:
        raise IngestionError(f"{name}: expected {expected} samples, got {len(images)}")
    return Split(images.astype(np.float32) / 255.0, labels.astype(np.int64))


def load_mnist(data_dir: str | Path | None = None, strict_counts: bool = True) -> MnistDataset:
    """Load the four IDX files; pixels scaled to [0, 1]."""
    d = resolve_dir(data_dir)
    if not d.is_dir():
        raise IngestionError(f"MNIST directory {d} does not exist")
    train = _split(read_idx_images(d / FILES["train_images"]), read_idx_labels(d / FILES["train_labels"]),
                   "train", 60000 if strict_counts else None)
    test = _split(read_idx_images(d / FILES["test_images"]), read_idx_labels(d / FILES["test_labels"]),
                  "test", 10000 if strict_counts else None)
    return MnistDataset(train, test)


def write_idx_images(path: str | Path, images: np.ndarray) -> None:
    images = np.asarray(images, dtype=np.uint8)
    n, r, c = images.shape
    Path(path).write_bytes(struct.pack(">IIII", IMAGE_MAGIC, n, r, c) + images.tobytes())


def write_idx_labels(path: str | Path, labels: np.ndarray) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    Path(path).write_bytes(struct.pack(">II", LABEL_MAGIC, len(labels)) + labels.tobytes())
