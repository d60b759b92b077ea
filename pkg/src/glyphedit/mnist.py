"""IDX-format digit file reading/writing and the in-memory glyph pool."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

TRAIN_IMAGES = "train-images-idx3-ubyte"
TRAIN_LABELS = "train-labels-idx1-ubyte"


class IdxError(ValueError):
    """Base class for IDX file problems."""


class BadMagic(IdxError):
    pass


class TruncatedFile(IdxError):
    pass


class CountMismatch(IdxError):
    pass


@dataclass
class GlyphPool:
    """28x28 glyphs in [0, 1] with digit labels, indexed by glyph id."""

    images: np.ndarray  # (N, 28, 28) float32
    labels: np.ndarray  # (N,) int64

    def __len__(self) -> int:
        return len(self.images)

    def ids_for_digit(self, digit: int) -> np.ndarray:
        return np.flatnonzero(self.labels == digit)

    @property
    def digits(self) -> list[int]:
        return sorted(int(d) for d in np.unique(self.labels))


def _read_exact(f, n: int, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise TruncatedFile(f"{what}: expected {n} bytes, got {len(data)}")
    return data


def read_idx_images(path) -> np.ndarray:
    """Read an IDX image file as a (N, rows, cols) uint8 array."""
    with open(path, "rb") as f:
        magic, count, rows, cols = struct.unpack(">iiii", _read_exact(f, 16, "header"))
        if magic != IMAGE_MAGIC:
            raise BadMagic(f"image magic 0x{magic:08x}, expected 0x{IMAGE_MAGIC:08x}")
        data = _read_exact(f, count * rows * cols, "pixel data")
    return np.frombuffer(data, dtype=np.uint8).reshape(count, rows, cols)


def read_idx_labels(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic, count = struct.unpack(">ii", _read_exact(f, 8, "header"))
        if magic != LABEL_MAGIC:
            raise BadMagic(f"label magic 0x{magic:08x}, expected 0x{LABEL_MAGIC:08x}")
        data = _read_exact(f, count, "label data")
    return np.frombuffer(data, dtype=np.uint8).astype(np.int64)


def write_idx_images(path, images: np.ndarray) -> None:
    """Write a (N, rows, cols) uint8 array in IDX format (test/synthetic data helper)."""
    images = np.ascontiguousarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">iiii", IMAGE_MAGIC, n, rows, cols))
        f.write(images.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">ii", LABEL_MAGIC, len(labels)))
        f.write(labels.tobytes())


def ingest_mnist(images_file, labels_file) -> GlyphPool:
    """Load an IDX image/label pair into a glyph pool, pixels scaled to [0, 1]."""
    images = read_idx_images(images_file)
    labels = read_idx_labels(labels_file)
    if len(images) != len(labels):
        raise CountMismatch(f"{len(images)} images but {len(labels)} labels")
    return GlyphPool(images.astype(np.float32) / 255.0, labels)


def ingest_dir(mnist_dir) -> GlyphPool:
    """Load the standard train split file pair from a directory."""
    d = Path(mnist_dir)
    return ingest_mnist(d / TRAIN_IMAGES, d / TRAIN_LABELS)
