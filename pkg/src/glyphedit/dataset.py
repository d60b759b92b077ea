"""Corpus builder: enumerate (source, instruction, target) edit pairs and persist shards.

Disk layout of a dataset directory:

    manifest.json   counts, seeds, glyph selections, shard checksums
    vocab.json      instruction vocabulary (index = word id)
    glyphs.bin      the referenced 28x28 glyphs, so the corpus is self-describing
    train.shard / val.shard / test.shard

A shard is a small JSON header followed by fixed-size binary records
(little-endian float32 images, int32 token/label/meta fields), so it can
be parsed from any language without a serialization library.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import canvas, dsl
from .canvas import CanvasState, labels, valid_pairs
from .dsl import Direction, InstructionTriplet, NamedPosition, Verb
from .mnist import GlyphPool

SHARD_MAGIC = b"GESHARD1"
GLYPHS_MAGIC = b"GEGLYPH1"
FORMAT_VERSION = 1
ENUMERATION_RULE = "fit-v1"  # 3x3 grid, sizes 1-4, level 4 fits the center cell only
TOKEN_LEN = dsl.MAX_TOKENS
IMAGE_SIZE = canvas.TRAIN_SIZE

RECORD_DTYPE = np.dtype([
    ("source", "<f4", (IMAGE_SIZE, IMAGE_SIZE)),
    ("target", "<f4", (IMAGE_SIZE, IMAGE_SIZE)),
    ("tokens", "<i4", (TOKEN_LEN,)),
    ("target_labels", "<i4", (5,)),
    ("source_labels", "<i4", (5,)),
    ("meta", "<i4", (9,)),
])

VERB_ORDER = sorted(Verb, key=lambda v: v.value)
POSITION_ORDER = list(NamedPosition)
DIRECTION_ORDER = list(Direction)


class DatasetError(ValueError):
    pass


class InsufficientGlyphs(DatasetError):
    pass


class ChecksumMismatch(DatasetError):
    pass


def encode_triplet(t: InstructionTriplet) -> tuple[int, int, int]:
    if t.verb is Verb.PUT:
        arg = POSITION_ORDER.index(t.arg)
    elif t.verb is Verb.MOVE:
        arg = DIRECTION_ORDER.index(t.arg)
    else:
        arg = -1
    return (VERB_ORDER.index(t.verb), t.digit, arg)


def decode_triplet(verb_idx: int, digit: int, arg_idx: int) -> InstructionTriplet:
    verb = VERB_ORDER[verb_idx]
    if verb is Verb.PUT:
        return InstructionTriplet(verb, digit, POSITION_ORDER[arg_idx])
    if verb is Verb.MOVE:
        return InstructionTriplet(verb, digit, DIRECTION_ORDER[arg_idx])
    return InstructionTriplet(verb, digit)


def encode_state(s: CanvasState) -> tuple[int, int, int, int, int]:
    if s.is_empty:
        return (0, 0, 0, 0, 0)
    return (1, s.digit, s.col, s.row, s.size_level)


def decode_state(occ: int, digit: int, col: int, row: int, size: int,
                 glyph_id: int) -> CanvasState:
    if not occ:
        return CanvasState.empty()
    return CanvasState(digit, glyph_id, col, row, size)


def make_record(glyph_id: int, source_state: CanvasState, triplet: InstructionTriplet,
                target_state: CanvasState, glyphs: np.ndarray) -> np.ndarray:
    rec = np.zeros((), dtype=RECORD_DTYPE)
    rec["source"] = canvas.downscale(canvas.render(source_state, glyphs))
    rec["target"] = canvas.downscale(canvas.render(target_state, glyphs))
    rec["tokens"] = dsl.padded_token_ids(dsl.realize(triplet), TOKEN_LEN)
    rec["target_labels"] = labels(target_state).as_tuple()
    rec["source_labels"] = labels(source_state).as_tuple()
    rec["meta"] = (glyph_id,) + encode_state(source_state) + encode_triplet(triplet)
    return rec


def record_meta(rec) -> tuple[int, CanvasState, InstructionTriplet]:
    m = [int(v) for v in rec["meta"]]
    glyph_id = m[0]
    state = decode_state(*m[1:6], glyph_id=glyph_id)
    return glyph_id, state, decode_triplet(*m[6:9])


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_header(f, magic: bytes, header: dict) -> None:
    payload = json.dumps(header, sort_keys=True).encode("utf-8")
    f.write(magic)
    f.write(len(payload).to_bytes(4, "little"))
    f.write(payload)


def _read_header(f, magic: bytes) -> dict:
    got = f.read(8)
    if got != magic:
        raise DatasetError(f"bad magic {got!r}, expected {magic!r}")
    n = int.from_bytes(f.read(4), "little")
    return json.loads(f.read(n).decode("utf-8"))


def write_shard(path, records: np.ndarray) -> None:
    header = {
        "format": FORMAT_VERSION,
        "count": int(len(records)),
        "record_bytes": RECORD_DTYPE.itemsize,
        "image_size": IMAGE_SIZE,
        "token_len": TOKEN_LEN,
        "fields": [
            {"name": name, "dtype": RECORD_DTYPE[name].base.str,
             "shape": list(RECORD_DTYPE[name].shape)}
            for name in RECORD_DTYPE.names
        ],
    }
    with open(path, "wb") as f:
        _write_header(f, SHARD_MAGIC, header)
        f.write(np.ascontiguousarray(records).tobytes())


def shard_header(path) -> tuple[dict, int]:
    """Read a shard header; returns (header, byte offset of the first record)."""
    with open(path, "rb") as f:
        header = _read_header(f, SHARD_MAGIC)
        offset = f.tell()
    if header["record_bytes"] != RECORD_DTYPE.itemsize:
        raise DatasetError(
            f"record size {header['record_bytes']} does not match this build "
            f"({RECORD_DTYPE.itemsize})"
        )
    return header, offset


def write_glyphs(path, ids: np.ndarray, images: np.ndarray, glyph_labels: np.ndarray) -> None:
    header = {
        "count": int(len(ids)),
        "rows": int(images.shape[1]),
        "cols": int(images.shape[2]),
        "ids": [int(i) for i in ids],
        "labels": [int(v) for v in glyph_labels],
    }
    with open(path, "wb") as f:
        _write_header(f, GLYPHS_MAGIC, header)
        f.write(np.ascontiguousarray(images, dtype="<f4").tobytes())


def read_glyphs(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (ids, images, labels); images indexed positionally, ids give pool ids."""
    with open(path, "rb") as f:
        header = _read_header(f, GLYPHS_MAGIC)
        n, rows, cols = header["count"], header["rows"], header["cols"]
        data = f.read(n * rows * cols * 4)
    images = np.frombuffer(data, dtype="<f4").reshape(n, rows, cols)
    return (np.asarray(header["ids"], dtype=np.int64), images,
            np.asarray(header["labels"], dtype=np.int64))


@dataclass
class DatasetManifest:
    seed: int
    per_class: int
    test_per_class: int
    digits: list[int]
    counts: dict[str, int]
    states_per_glyph: int
    pairs_per_glyph: int
    vocab_sha256: str
    shards: dict[str, dict]
    glyph_selection: dict[str, dict[str, list[int]]]

    def to_json(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "enumeration_rule": ENUMERATION_RULE,
            "split_rule": "90/10 over edit pairs; test glyphs disjoint",
            "seed": self.seed,
            "per_class": self.per_class,
            "test_per_class": self.test_per_class,
            "digits": self.digits,
            "counts": self.counts,
            "states_per_glyph": self.states_per_glyph,
            "pairs_per_glyph": self.pairs_per_glyph,
            "vocab_sha256": self.vocab_sha256,
            "shards": self.shards,
            "glyph_selection": self.glyph_selection,
        }


def load_manifest(data_dir) -> dict:
    with open(Path(data_dir) / "manifest.json", "r", encoding="utf-8") as f:
        return json.load(f)


def _pair_records(pool_images: np.ndarray, digit: int, glyph_id: int) -> np.ndarray:
    pairs = valid_pairs(digit, glyph_id)
    out = np.zeros(len(pairs), dtype=RECORD_DTYPE)
    for i, (state, triplet, new_state) in enumerate(pairs):
        out[i] = make_record(glyph_id, state, triplet, new_state, pool_images)
    return out


def build(pool: GlyphPool, per_class: int, seed: int, out_dir,
          test_per_class: int = 100) -> dict:
    """Build train/val/test shards from a glyph pool; returns the manifest dict.

    Glyph selection, pair order, and the 90/10 split are all driven by
    one seeded generator, so identical inputs give byte-identical output.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    digits = pool.digits

    trainval_ids: dict[int, np.ndarray] = {}
    test_ids: dict[int, np.ndarray] = {}
    for digit in digits:
        ids = pool.ids_for_digit(digit)
        need = per_class + test_per_class
        if len(ids) < need:
            raise InsufficientGlyphs(
                f"digit {digit}: need {need} glyphs, pool has {len(ids)}"
            )
        chosen = rng.choice(ids, size=need, replace=False)
        trainval_ids[digit] = np.sort(chosen[:per_class])
        test_ids[digit] = np.sort(chosen[per_class:])

    states_per_glyph = len(canvas.reachable_states(digits[0], 0))

    def emit(selection: dict[int, np.ndarray]) -> np.ndarray:
        chunks = [
            _pair_records(pool.images, digit, int(gid))
            for digit in digits
            for gid in selection[digit]
        ]
        return np.concatenate(chunks) if chunks else np.zeros(0, dtype=RECORD_DTYPE)

    trainval = emit(trainval_ids)
    test = emit(test_ids)
    pairs_per_glyph = len(trainval) // max(1, per_class * len(digits))

    perm = rng.permutation(len(trainval))
    n_val = int(round(0.1 * len(trainval)))
    val = trainval[perm[:n_val]]
    train = trainval[perm[n_val:]]

    vocab_path = out / "vocab.json"
    dsl.save_vocabulary(vocab_path)

    used_ids = np.concatenate(
        [trainval_ids[d] for d in digits] + [test_ids[d] for d in digits]
    )
    used_ids = np.sort(used_ids)
    write_glyphs(out / "glyphs.bin", used_ids, pool.images[used_ids], pool.labels[used_ids])

    shards = {}
    for name, records in (("train", train), ("val", val), ("test", test)):
        path = out / f"{name}.shard"
        write_shard(path, records)
        shards[name] = {"file": path.name, "count": int(len(records)),
                        "sha256": _sha256(path)}

    manifest = DatasetManifest(
        seed=seed,
        per_class=per_class,
        test_per_class=test_per_class,
        digits=[int(d) for d in digits],
        counts={k: v["count"] for k, v in shards.items()},
        states_per_glyph=states_per_glyph,
        pairs_per_glyph=pairs_per_glyph,
        vocab_sha256=_sha256(vocab_path),
        shards=shards,
        glyph_selection={
            "trainval": {str(d): [int(i) for i in trainval_ids[d]] for d in digits},
            "test": {str(d): [int(i) for i in test_ids[d]] for d in digits},
        },
    ).to_json()
    with open(out / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    return manifest


def _glyph_images_for_verify(data_dir) -> np.ndarray:
    ids, images, _ = read_glyphs(Path(data_dir) / "glyphs.bin")
    # Sparse pool indexed by original glyph id.
    pool = np.zeros((int(ids.max()) + 1 if len(ids) else 0, 28, 28), dtype=np.float32)
    pool[ids] = images
    return pool


def verify(data_dir) -> dict:
    """Recompute every sample from its meta fields and compare bit-exactly.

    Also checks shard checksums against the manifest and that stored
    instructions parse back to their triplets.  Returns a stats dict;
    raises DatasetError on the first discrepancy.
    """
    data_dir = Path(data_dir)
    manifest = load_manifest(data_dir)
    if _sha256(data_dir / "vocab.json") != manifest["vocab_sha256"]:
        raise ChecksumMismatch("vocab.json checksum differs from manifest")
    pool = _glyph_images_for_verify(data_dir)

    checked = {}
    for name, info in manifest["shards"].items():
        path = data_dir / info["file"]
        if _sha256(path) != info["sha256"]:
            raise ChecksumMismatch(f"{info['file']} checksum differs from manifest")
        header, offset = shard_header(path)
        if header["count"] != info["count"]:
            raise DatasetError(f"{info['file']}: header count != manifest count")
        records = np.memmap(path, dtype=RECORD_DTYPE, mode="r", offset=offset,
                            shape=(header["count"],))
        for i in range(len(records)):
            rec = records[i]
            glyph_id, state, triplet = record_meta(rec)
            target_state = canvas.apply(state, triplet, glyph_id=glyph_id)
            regenerated = make_record(glyph_id, state, triplet, target_state, pool)
            if regenerated.tobytes() != rec.tobytes():
                raise DatasetError(f"{info['file']} record {i}: regeneration differs")
            if dsl.parse(dsl.realize(triplet)) != triplet:
                raise DatasetError(f"{info['file']} record {i}: instruction round-trip failed")
        checked[name] = len(records)
    return {"verified": checked, "total": int(sum(checked.values()))}


def stats(data_dir) -> dict:
    """Manifest summary for `dataset stats`."""
    manifest = load_manifest(data_dir)
    return {
        "counts": manifest["counts"],
        "digits": manifest["digits"],
        "per_class": manifest["per_class"],
        "test_per_class": manifest["test_per_class"],
        "states_per_glyph": manifest["states_per_glyph"],
        "pairs_per_glyph": manifest["pairs_per_glyph"],
        "seed": manifest["seed"],
        "enumeration_rule": manifest["enumeration_rule"],
    }
