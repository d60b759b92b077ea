"""Batch streams over dataset shards."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from . import dataset as ds
from .dsl import PAD_ID


class ShapeMismatchError(ds.DatasetError):
    pass


class ShardReader:
    """Random access over one shard's records via memmap.

    With `expected_sha` set, the file checksum is verified once at open.
    """

    def __init__(self, path, expected_sha: str | None = None):
        self.path = Path(path)
        if expected_sha is not None and ds._sha256(self.path) != expected_sha:
            raise ds.ChecksumMismatch(f"{self.path.name} checksum differs from manifest")
        header, offset = ds.shard_header(self.path)
        if header["image_size"] != ds.IMAGE_SIZE or header["token_len"] != ds.TOKEN_LEN:
            raise ShapeMismatchError(
                f"{self.path.name}: shard geometry {header['image_size']}/{header['token_len']} "
                f"does not match this build"
            )
        self.count = header["count"]
        self.records = np.memmap(self.path, dtype=ds.RECORD_DTYPE, mode="r",
                                 offset=offset, shape=(self.count,))

    def __len__(self) -> int:
        return self.count


def open_split(data_dir, split: str, verify_checksum: bool = True) -> ShardReader:
    data_dir = Path(data_dir)
    manifest = ds.load_manifest(data_dir)
    info = manifest["shards"][split]
    sha = info["sha256"] if verify_checksum else None
    return ShardReader(data_dir / info["file"], expected_sha=sha)


@dataclass
class Batch:
    source: np.ndarray         # (B, 1, 64, 64) float32
    target: np.ndarray         # (B, 1, 64, 64) float32
    tokens: np.ndarray         # (B, L) int32, L = longest non-pad run in batch
    target_labels: np.ndarray  # (B, 5) int64
    source_labels: np.ndarray  # (B, 5) int64
    indices: np.ndarray        # (B,) positions within the shard

    def __len__(self) -> int:
        return len(self.indices)


def gather_batch(reader: ShardReader, idx: np.ndarray) -> Batch:
    recs = reader.records[idx]
    tokens = np.ascontiguousarray(recs["tokens"])
    used = max(1, int(np.max(np.sum(tokens != PAD_ID, axis=1))))
    n = len(idx)
    return Batch(
        source=np.ascontiguousarray(recs["source"]).reshape(n, 1, ds.IMAGE_SIZE, ds.IMAGE_SIZE),
        target=np.ascontiguousarray(recs["target"]).reshape(n, 1, ds.IMAGE_SIZE, ds.IMAGE_SIZE),
        tokens=tokens[:, :used],
        target_labels=recs["target_labels"].astype(np.int64),
        source_labels=recs["source_labels"].astype(np.int64),
        indices=np.asarray(idx),
    )


def batches(reader: ShardReader, batch_size: int, shuffle_seed: int | None = None,
            epoch: int = 0) -> Iterator[Batch]:
    """One epoch of batches; the final batch may be short so coverage is exact.

    Epoch order is the seeded permutation of (shuffle_seed, epoch); None
    streams in shard order.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if shuffle_seed is None:
        order = np.arange(reader.count)
    else:
        order = np.random.default_rng((shuffle_seed, epoch)).permutation(reader.count)
    for start in range(0, reader.count, batch_size):
        yield gather_batch(reader, order[start:start + batch_size])
