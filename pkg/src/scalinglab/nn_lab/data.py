"""Datasets: synthetic Gaussian clusters, IDX ingestion, subsampling, label noise."""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..errors import BadMagicError, CountMismatchError, DomainError, TruncatedPayloadError

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    class_ids: np.ndarray
    name: str = ""

    def __post_init__(self):
        if self.inputs.shape[0] != self.labels.shape[0] or self.labels.shape[0] != self.class_ids.shape[0]:
            raise DomainError("inputs, labels and class_ids disagree on sample count")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_classes(self) -> int:
        return self.labels.shape[1]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def take(self, idx: np.ndarray, name: str | None = None) -> "Dataset":
        return Dataset(self.inputs[idx], self.labels[idx], self.class_ids[idx], self.name if name is None else name)


def one_hot(class_ids: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((len(class_ids), k))
    out[np.arange(len(class_ids)), class_ids] = 1.0
    return out


def generate_synthetic(
    k: int, d: int, n: int, cluster_spread: float, seed: int, centers_seed: int | None = None
) -> Dataset:
    """``k`` Gaussian clusters around random unit-norm centers in R^d.

    Classes are balanced up to the remainder (class ``i`` gets one extra
    sample for ``i < n % k``). Centers come from ``centers_seed`` (default
    ``seed``) so train and test sets can share them.
    """
    if min(k, d, n) < 1:
        raise DomainError("k, d and n must be positive")
    crng = np.random.default_rng(seed if centers_seed is None else centers_seed)
    centers = crng.standard_normal((k, d))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    rng = np.random.default_rng([int(seed), 7])
    class_ids = np.arange(n) % k
    class_ids = class_ids[rng.permutation(n)]
    inputs = centers[class_ids] + cluster_spread * rng.standard_normal((n, d))
    return Dataset(inputs, one_hot(class_ids, k), class_ids, f"synthetic-k{k}-d{d}")


def synthetic_split(
    k: int, d: int, n_train: int, n_test: int, cluster_spread: float, seed: int
) -> tuple[Dataset, Dataset]:
    """Train and test sets drawn from the same clusters."""
    train = generate_synthetic(k, d, n_train, cluster_spread, seed=seed, centers_seed=seed)
    test = generate_synthetic(k, d, n_test, cluster_spread, seed=seed + 1_000_003, centers_seed=seed)
    return train, test


def _read_header(buf: bytes, path, magic: int, ndims: int) -> tuple[int, ...]:
    need = 4 * (1 + ndims)
    if len(buf) < need:
        raise TruncatedPayloadError(f"{path}: header shorter than {need} bytes")
    got = struct.unpack(">I", buf[:4])[0]
    if got != magic:
        raise BadMagicError(f"{path}: magic 0x{got:08x}, expected 0x{magic:08x}")
    return struct.unpack(f">{ndims}I", buf[4:need])


def load_idx(images_path, labels_path, k: int = 10) -> Dataset:
    """Read an IDX image/label pair; pixels scaled to [0, 1] then (v - 0.5) / 0.5."""
    img = Path(images_path).read_bytes()
    lab = Path(labels_path).read_bytes()
    count, rows, cols = _read_header(img, images_path, IMAGES_MAGIC, 3)
    (n_labels,) = _read_header(lab, labels_path, LABELS_MAGIC, 1)
    pixels = count * rows * cols
    if len(img) - 16 < pixels:
        raise TruncatedPayloadError(f"{images_path}: {len(img) - 16} payload bytes, expected {pixels}")
    if len(lab) - 8 < n_labels:
        raise TruncatedPayloadError(f"{labels_path}: {len(lab) - 8} payload bytes, expected {n_labels}")
    if count != n_labels:
        raise CountMismatchError(f"{count} images but {n_labels} labels")
    x = np.frombuffer(img, dtype=np.uint8, count=pixels, offset=16).reshape(count, rows * cols)
    y = np.frombuffer(lab, dtype=np.uint8, count=n_labels, offset=8).astype(np.int64)
    if y.size and y.max() >= k:
        raise DomainError(f"label {y.max()} out of range for {k} classes")
    inputs = (x.astype(float) / 255.0 - 0.5) / 0.5
    return Dataset(inputs, one_hot(y, k), y, Path(images_path).name)


def write_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path) -> None:
    """Write uint8 images (count, rows, cols) and labels in IDX format."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">4I", IMAGES_MAGIC, *images.shape))
        f.write(images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">2I", LABELS_MAGIC, labels.shape[0]))
        f.write(labels.tobytes())


def subsample(ds: Dataset, n: int, seed: int) -> Dataset:
    """Uniform sample of ``n`` rows without replacement."""
    if not 1 <= n <= len(ds):
        raise DomainError(f"subsample size {n} outside [1, {len(ds)}]")
    idx = np.random.default_rng(seed).permutation(len(ds))[:n]
    return ds.take(idx)


def corrupt_labels(ds: Dataset, fraction: float, seed: int, exclude_true: bool = False) -> Dataset:
    """Resample the labels of a random ``floor(fraction * n)`` subset.

    New labels are uniform over all classes (so some keep their class);
    ``exclude_true`` forces a different class instead.
    """
    if not 0.0 <= fraction <= 1.0:
        raise DomainError("fraction must lie in [0, 1]")
    n, k = len(ds), ds.n_classes
    count = int(np.floor(fraction * n))
    if count == 0:
        return ds
    rng = np.random.default_rng(seed)
    idx = rng.choice(n, size=count, replace=False)
    ids = ds.class_ids.copy()
    if exclude_true:
        ids[idx] = (ids[idx] + rng.integers(1, k, size=count)) % k
    else:
        ids[idx] = rng.integers(0, k, size=count)
    return replace(ds, labels=one_hot(ids, k), class_ids=ids)
