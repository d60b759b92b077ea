"""Named-tensor checkpoint container.

Single file: magic, a JSON index (name -> dtype, shape, byte offset, plus
free-form metadata), then the concatenated little-endian payload.  Names
are sorted so identical contents give identical bytes.  Reserved name
prefixes: "opt/" for optimizer state, "bn/" for batchnorm statistics.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

MAGIC = b"GECKPT01"

_DTYPE_TAGS = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8"), "<i4": np.dtype("<i4"),
               "<i8": np.dtype("<i8")}


class CheckpointError(IOError):
    pass


def save_checkpoint(path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    entries = []
    chunks = []
    offset = 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name])
        tag = arr.dtype.newbyteorder("<").str
        if tag not in _DTYPE_TAGS:
            raise CheckpointError(f"{name}: unsupported dtype {arr.dtype}")
        data = arr.astype(tag, copy=False).tobytes()
        entries.append({"name": name, "dtype": tag, "shape": list(arr.shape),
                        "offset": offset, "nbytes": len(data)})
        chunks.append(data)
        offset += len(data)
    header = json.dumps({"meta": meta or {}, "tensors": entries}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(len(header).to_bytes(8, "little"))
        f.write(header)
        for chunk in chunks:
            f.write(chunk)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    try:
        with open(path, "rb") as f:
            if f.read(8) != MAGIC:
                raise CheckpointError(f"{path}: not a checkpoint file")
            n = int.from_bytes(f.read(8), "little")
            header = json.loads(f.read(n).decode("utf-8"))
            payload = f.read()
    except OSError as e:
        raise CheckpointError(f"{path}: {e}") from e
    tensors = {}
    for entry in header["tensors"]:
        dt = _DTYPE_TAGS[entry["dtype"]]
        start, nbytes = entry["offset"], entry["nbytes"]
        if start + nbytes > len(payload):
            raise CheckpointError(f"{path}: truncated payload for {entry['name']}")
        arr = np.frombuffer(payload[start:start + nbytes], dtype=dt)
        tensors[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return tensors, header["meta"]
