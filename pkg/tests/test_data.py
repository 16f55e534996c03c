import gzip
import struct

import numpy as np
import pytest

from gossip_omkl.data import (
    BANANA_CLASS_COUNTS,
    Dataset,
    load_banana,
    load_credit_card,
    load_mnist,
    make_banana_like,
    make_synthetic,
    partition,
    read_idx_images,
    read_idx_labels,
)


def write_idx(images_path, labels_path, images, labels, image_magic=2051):
    count, rows, cols = images.shape
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">iiii", image_magic, count, rows, cols))
        fh.write(images.astype(np.uint8).tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">ii", 2049, len(labels)))
        fh.write(np.asarray(labels, dtype=np.uint8).tobytes())


@pytest.fixture
def idx_files(tmp_path):
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, size=(12, 4, 3))
    labels = np.array([8, 3, 8, 1, 0, 8, 3, 3, 9, 8, 2, 5])
    img, lbl = tmp_path / "img.idx", tmp_path / "lbl.idx"
    write_idx(img, lbl, images, labels)
    return img, lbl, images, labels


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 2)), np.array([1.0, -1.0]))
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 2)), np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        Dataset(np.array([[np.nan, 0.0], [0.0, 0.0]]), np.array([1.0, -1.0]))


def test_banana_loader(tmp_path):
    path = tmp_path / "banana.csv"
    path.write_text("At1,At2,Class\n1.0,2.0,2\n-1.0,0.5,1\n0.0,0.0,2\n3.0,1.0,1\n")
    raw = load_banana(path, standardize_features=False)
    assert (raw.n_samples, raw.n_features) == (4, 2)
    # first label to appear becomes +1
    np.testing.assert_array_equal(raw.y, [1, -1, 1, -1])
    scaled = load_banana(path)
    np.testing.assert_allclose(scaled.X.mean(axis=0), 0.0, atol=1e-15)
    np.testing.assert_allclose(scaled.X.std(axis=0), 1.0, atol=1e-12)


def test_banana_keeps_signed_labels(tmp_path):
    path = tmp_path / "banana.csv"
    path.write_text("0.1,0.2,-1\n0.3,0.4,1\n")
    np.testing.assert_array_equal(load_banana(path).y, [-1, 1])


@pytest.mark.parametrize("text,match", [
    ("", "no data"),
    ("a,b,c\n", "no data"),
    ("1,2,1\n1,2\n", "line 2"),
    ("1,2,1\n1,x,2\n", "line 2"),
    ("1,2,1\n3,4,2\n5,6,3\n", "two label values"),
])
def test_banana_malformed(tmp_path, text, match):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(ValueError, match=match):
        load_banana(path)


def test_credit_card_loader(tmp_path):
    path = tmp_path / "cc.csv"
    path.write_text(
        ",X1,X2,X3,Y\nID,LIMIT_BAL,SEX,AGE,default payment next month\n"
        "1,20000,2,24,1\n2,120000,2,26,0\n3,90000,1,34,0\n"
    )
    ds = load_credit_card(path, standardize_features=False)
    assert (ds.n_samples, ds.n_features) == (3, 3)
    np.testing.assert_array_equal(ds.y, [1, -1, -1])
    np.testing.assert_array_equal(ds.X[:, 0], [20000, 120000, 90000])


def test_credit_card_rejects_nonbinary(tmp_path):
    path = tmp_path / "cc.csv"
    path.write_text("1,2,3\n4,5,2\n")
    with pytest.raises(ValueError):
        load_credit_card(path)


def test_idx_round_trip(idx_files):
    img, lbl, images, labels = idx_files
    np.testing.assert_array_equal(read_idx_images(img), images.reshape(12, 12))
    np.testing.assert_array_equal(read_idx_labels(lbl), labels)


def test_idx_gzip(tmp_path, idx_files):
    img, lbl, images, _ = idx_files
    gz = tmp_path / "img.idx.gz"
    gz.write_bytes(gzip.compress(img.read_bytes()))
    np.testing.assert_array_equal(read_idx_images(gz), images.reshape(12, 12))


def test_idx_bad_magic(tmp_path, idx_files):
    img, lbl = tmp_path / "i", tmp_path / "l"
    write_idx(img, lbl, np.zeros((2, 2, 2)), [1, 2], image_magic=2049)
    with pytest.raises(ValueError, match="magic"):
        read_idx_images(img)
    with pytest.raises(ValueError, match="magic"):
        read_idx_labels(idx_files[0])


def test_idx_truncated(tmp_path, idx_files):
    img, lbl, _, _ = idx_files
    cut = tmp_path / "cut"
    cut.write_bytes(img.read_bytes()[:-1])
    with pytest.raises(ValueError, match="truncated"):
        read_idx_images(cut)
    cut.write_bytes(lbl.read_bytes()[:5])
    with pytest.raises(ValueError, match="truncated"):
        read_idx_labels(cut)


def test_mnist_labels_and_scaling(idx_files):
    img, lbl, images, labels = idx_files
    ds = load_mnist(img, lbl, standardize_features=False)
    assert (ds.n_samples, ds.n_features) == (12, 12)
    np.testing.assert_array_equal(ds.y, np.where(labels == 8, 1, -1))
    np.testing.assert_allclose(ds.X, images.reshape(12, 12) / 255.0)
    both = load_mnist([img, img], [lbl, lbl])
    assert both.n_samples == 24


def test_mnist_count_mismatch(tmp_path):
    img, lbl = tmp_path / "i", tmp_path / "l"
    write_idx(img, lbl, np.zeros((3, 2, 2)), [1, 2])
    with pytest.raises(ValueError):
        load_mnist(img, lbl)


def test_synthetic_deterministic():
    a, b = make_synthetic(100, 3, 2.0, seed=4), make_synthetic(100, 3, 2.0, seed=4)
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(a.y, b.y)
    assert a.y.sum() == 0
    with pytest.raises(ValueError):
        make_synthetic(101, 3, 1.0)


def test_synthetic_separable_at_large_separation():
    ds = make_synthetic(1000, 2, 40.0, seed=0)
    assert np.all(np.sign(ds.X[:, 0]) == ds.y)


def test_banana_like_shape_and_balance():
    ds = make_banana_like()
    assert (ds.n_samples, ds.n_features) == (5300, 2)
    assert int((ds.y == -1).sum()) == BANANA_CLASS_COUNTS[0]
    assert int((ds.y == 1).sum()) == BANANA_CLASS_COUNTS[1]


@pytest.mark.parametrize("n,J,T", [(5300, 20, 265), (30000, 20, 1500), (10, 1, 10), (7, 3, 2)])
def test_partition_sizes(n, J, T):
    ds = Dataset(np.arange(n, dtype=float)[:, None], np.ones(n))
    part = partition(ds, J, seed=1)
    assert (part.n_rounds, part.n_nodes, part.n_features) == (T, J, 1)
    used = part.indices.ravel()
    assert len(np.unique(used)) == T * J
    np.testing.assert_array_equal(part.X[..., 0], used.reshape(T, J))


def test_partition_seeded():
    ds = make_synthetic(40, 2, 1.0)
    np.testing.assert_array_equal(partition(ds, 4, seed=2).indices, partition(ds, 4, seed=2).indices)
    assert not np.array_equal(partition(ds, 4, seed=2).indices, partition(ds, 4, seed=3).indices)
    with pytest.raises(ValueError):
        partition(ds, 41)
