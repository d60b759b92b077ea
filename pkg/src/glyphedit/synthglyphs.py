"""Offline stand-in glyphs for environments without the MNIST files.

Upscales the scikit-learn handwritten digits (8x8, 1797 samples) to the
28x28 glyph format the corpus builder expects.  Coarser than MNIST but
real handwriting with per-sample variation, and available offline.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .canvas import bilinear_resize
from .mnist import GlyphPool, write_idx_images, write_idx_labels


def synthetic_pool(per_class: int | None = None, digits: tuple[int, ...] | None = None,
                   seed: int = 0) -> GlyphPool:
    """Build a glyph pool from the scikit-learn digits dataset.

    With `per_class` set, draws that many glyphs per digit with a seeded
    shuffle; otherwise keeps every sample in dataset order.
    """
    from sklearn.datasets import load_digits  # optional dependency, import on use

    raw = load_digits()
    images = raw.images.astype(np.float32) / 16.0
    labels = raw.target.astype(np.int64)
    if digits is not None:
        keep = np.isin(labels, digits)
        images, labels = images[keep], labels[keep]
    if per_class is not None:
        rng = np.random.default_rng(seed)
        chosen = []
        for d in np.unique(labels):
            ids = np.flatnonzero(labels == d)
            if len(ids) < per_class:
                raise ValueError(f"only {len(ids)} glyphs available for digit {d}")
            chosen.extend(rng.choice(ids, size=per_class, replace=False))
        chosen = np.sort(np.asarray(chosen))
        images, labels = images[chosen], labels[chosen]
    up = np.stack([bilinear_resize(img, 28, 28) for img in images])
    return GlyphPool(np.clip(up, 0.0, 1.0), labels)


def write_synthetic_idx(out_dir, per_class: int | None = None,
                        digits: tuple[int, ...] | None = None, seed: int = 0) -> Path:
    """Write the synthetic pool as a standard IDX train file pair; returns the dir."""
    from .mnist import TRAIN_IMAGES, TRAIN_LABELS

    pool = synthetic_pool(per_class=per_class, digits=digits, seed=seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_idx_images(out / TRAIN_IMAGES, np.rint(pool.images * 255).astype(np.uint8))
    write_idx_labels(out / TRAIN_LABELS, pool.labels)
    return out
