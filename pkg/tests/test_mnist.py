import struct

import numpy as np
import pytest

from glyphedit import mnist


def fake_pool_arrays(n=40, seed=0):
    rng = np.random.default_rng(seed)
    images = rng.integers(0, 256, size=(n, 28, 28), dtype=np.uint8)
    labels = (np.arange(n) % 10).astype(np.uint8)
    return images, labels


def write_pair(tmp_path, images, labels):
    ip, lp = tmp_path / "imgs", tmp_path / "labs"
    mnist.write_idx_images(ip, images)
    mnist.write_idx_labels(lp, labels)
    return ip, lp


def test_round_trip(tmp_path):
    images, labels = fake_pool_arrays()
    ip, lp = write_pair(tmp_path, images, labels)
    assert np.array_equal(mnist.read_idx_images(ip), images)
    assert np.array_equal(mnist.read_idx_labels(lp), labels)


def test_ingest_scales_to_unit_range(tmp_path):
    images, labels = fake_pool_arrays()
    ip, lp = write_pair(tmp_path, images, labels)
    pool = mnist.ingest_mnist(ip, lp)
    assert pool.images.dtype == np.float32
    assert pool.images.min() >= 0.0 and pool.images.max() <= 1.0
    assert np.array_equal(pool.images, images.astype(np.float32) / 255.0)
    assert len(pool) == len(images)


def test_bad_magic(tmp_path):
    path = tmp_path / "bad"
    with open(path, "wb") as f:
        f.write(struct.pack(">iiii", 0xDEAD, 1, 28, 28))
        f.write(bytes(784))
    with pytest.raises(mnist.BadMagic):
        mnist.read_idx_images(path)
    with pytest.raises(mnist.BadMagic):
        mnist.read_idx_labels(path)


def test_truncated(tmp_path):
    path = tmp_path / "short"
    with open(path, "wb") as f:
        f.write(struct.pack(">iiii", mnist.IMAGE_MAGIC, 2, 28, 28))
        f.write(bytes(100))
    with pytest.raises(mnist.TruncatedFile):
        mnist.read_idx_images(path)


def test_count_mismatch(tmp_path):
    images, labels = fake_pool_arrays()
    ip, lp = write_pair(tmp_path, images, labels[:-3])
    with pytest.raises(mnist.CountMismatch):
        mnist.ingest_mnist(ip, lp)


def test_pool_digit_index():
    images, labels = fake_pool_arrays(n=30)
    pool = mnist.GlyphPool(images.astype(np.float32) / 255.0, labels.astype(np.int64))
    assert pool.digits == list(range(10))
    ids = pool.ids_for_digit(3)
    assert all(pool.labels[i] == 3 for i in ids)


def test_synthetic_pool_shapes():
    from glyphedit.synthglyphs import synthetic_pool

    pool = synthetic_pool(per_class=5, digits=(0, 7), seed=1)
    assert pool.images.shape == (10, 28, 28)
    assert pool.digits == [0, 7]
    assert pool.images.min() >= 0.0 and pool.images.max() <= 1.0


def test_synthetic_idx_round_trip(tmp_path):
    from glyphedit.synthglyphs import write_synthetic_idx

    out = write_synthetic_idx(tmp_path / "d", per_class=3, digits=(1, 2), seed=0)
    pool = mnist.ingest_dir(out)
    assert len(pool) == 6
    assert pool.digits == [1, 2]
