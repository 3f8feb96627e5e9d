"""MNIST (IDX) and CIFAR-10 (binary batch) readers, plus synthetic blobs for tests."""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import BadLabelError, BadMagicError, CountMismatchError, TruncatedFileError, UsageError
from .numerics import RngStream

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD = 3073


@dataclass(frozen=True, eq=False)
class Dataset:
    images: np.ndarray  # (num_samples, feature_dim) float32
    labels: np.ndarray  # (num_samples,) int64
    num_classes: int
    name: str = ""

    def __post_init__(self):
        if self.images.ndim != 2 or self.images.shape[0] != self.labels.shape[0]:
            raise UsageError("images must be 2-D with one row per label")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise UsageError("label out of range")

    @property
    def num_samples(self):
        return self.images.shape[0]

    @property
    def feature_dim(self):
        return self.images.shape[1]

    def take(self, idx, name=None):
        return Dataset(self.images[idx], self.labels[idx], self.num_classes, name or self.name)


def _read_bytes(path):
    with open(path, "rb") as f:
        return f.read()


def _idx_header(raw, path, magic, ndims):
    need = 4 * (1 + ndims)
    if len(raw) < need:
        raise TruncatedFileError(f"{path}: {len(raw)} bytes is shorter than the IDX header")
    got = int.from_bytes(raw[:4], "big")
    if got != magic:
        raise BadMagicError(f"{path}: magic 0x{got:08x}, expected 0x{magic:08x}")
    return [int.from_bytes(raw[4 + 4 * k:8 + 4 * k], "big") for k in range(ndims)], need


def load_mnist_idx(images_path, labels_path, name="mnist") -> Dataset:
    raw = _read_bytes(images_path)
    (count, rows, cols), off = _idx_header(raw, images_path, IDX_IMAGES_MAGIC, 3)
    body = np.frombuffer(raw, dtype=np.uint8, offset=off)
    if body.size < count * rows * cols:
        raise TruncatedFileError(f"{images_path}: expected {count * rows * cols} pixel bytes, found {body.size}")
    images = body[:count * rows * cols].reshape(count, rows * cols)

    raw = _read_bytes(labels_path)
    (n_labels,), off = _idx_header(raw, labels_path, IDX_LABELS_MAGIC, 1)
    labels = np.frombuffer(raw, dtype=np.uint8, offset=off)
    if labels.size < n_labels:
        raise TruncatedFileError(f"{labels_path}: expected {n_labels} labels, found {labels.size}")
    labels = labels[:n_labels]
    if n_labels != count:
        raise CountMismatchError(f"{count} images but {n_labels} labels")
    if labels.size and labels.max() > 9:
        raise BadLabelError(f"{labels_path}: label {labels.max()} > 9")
    return Dataset(images.astype(np.float32) / 255.0, labels.astype(np.int64), 10, name)


def load_cifar10(batch_paths, name="cifar10") -> Dataset:
    images, labels = [], []
    for path in batch_paths:
        raw = np.frombuffer(_read_bytes(path), dtype=np.uint8)
        if raw.size == 0 or raw.size % CIFAR_RECORD:
            raise TruncatedFileError(f"{path}: length {raw.size} is not a positive multiple of {CIFAR_RECORD}")
        rec = raw.reshape(-1, CIFAR_RECORD)
        if rec[:, 0].max() > 9:
            raise BadLabelError(f"{path}: label byte {rec[:, 0].max()} > 9")
        labels.append(rec[:, 0].astype(np.int64))
        images.append(rec[:, 1:].astype(np.float32) / 255.0)
    if not images:
        raise UsageError("no CIFAR-10 batch files given")
    return Dataset(np.concatenate(images), np.concatenate(labels), 10, name)


def make_synthetic(stream: RngStream, samples_per_class, num_classes, feature_dim, separation=10.0,
                   name="synthetic") -> Dataset:
    """Gaussian blobs with unit-variance noise around seeded class centres.

    Centres are scaled so the closest pair is exactly ``separation`` apart.
    Features are not confined to [0, 1].
    """
    if min(samples_per_class, num_classes, feature_dim) < 1:
        raise UsageError("samples_per_class, num_classes and feature_dim must be >= 1")
    centres = stream.child("centres").normal((num_classes, feature_dim))
    if num_classes > 1:
        diffs = centres[:, None, :] - centres[None, :, :]
        dist = np.sqrt((diffs ** 2).sum(-1))
        closest = dist[~np.eye(num_classes, dtype=bool)].min()
        centres *= separation / closest
    labels = np.repeat(np.arange(num_classes), samples_per_class)
    x = centres[labels] + stream.child("noise").normal((labels.size, feature_dim))
    order = stream.child("order").permutation(labels.size)
    x = np.nan_to_num(x[order])
    return Dataset(x.astype(np.float32), labels[order].astype(np.int64), num_classes, name)


def split_stratified(labels, n, stream: RngStream, num_classes=None):
    """Indices of a class-stratified sample of size ``n`` (largest-remainder allocation)."""
    labels = np.asarray(labels)
    if not 0 <= n <= labels.size:
        raise UsageError(f"cannot take {n} samples from {labels.size}")
    classes = np.arange(num_classes if num_classes is not None else labels.max() + 1)
    counts = np.array([(labels == c).sum() for c in classes])
    quota = n * counts / labels.size
    take = np.floor(quota).astype(int)
    short = n - take.sum()
    # hand the leftovers to the largest remainders, ties by class order
    for c in np.argsort(-(quota - take), kind="stable")[:short]:
        take[c] += 1
    picked = []
    for c in classes:
        members = np.flatnonzero(labels == c)
        picked.append(members[stream.child(f"class{c}").permutation(members.size)[:take[c]]])
    idx = np.concatenate(picked)
    return idx[stream.child("order").permutation(idx.size)]


def subset(dataset: Dataset, n, stream: RngStream) -> Dataset:
    """Seeded class-stratified sample of ``n`` items."""
    if n > dataset.num_samples:
        raise UsageError(f"subset of {n} requested from {dataset.num_samples} samples")
    idx = split_stratified(dataset.labels, n, stream, dataset.num_classes)
    return dataset.take(idx, f"{dataset.name}[{n}]")


def load_dataset(name, data_dir):
    """(train, test) for ``mnist`` or ``cifar10`` from the standard file names under ``data_dir``."""
    if name == "mnist":
        p = lambda f: os.path.join(data_dir, f)
        return (load_mnist_idx(p("train-images-idx3-ubyte"), p("train-labels-idx1-ubyte"), "mnist"),
                load_mnist_idx(p("t10k-images-idx3-ubyte"), p("t10k-labels-idx1-ubyte"), "mnist-test"))
    if name == "cifar10":
        base = data_dir
        if os.path.isdir(os.path.join(base, "cifar-10-batches-bin")):
            base = os.path.join(base, "cifar-10-batches-bin")
        train = [os.path.join(base, f"data_batch_{k}.bin") for k in range(1, 6)]
        return load_cifar10(train, "cifar10"), load_cifar10([os.path.join(base, "test_batch.bin")], "cifar10-test")
    raise UsageError(f"unknown dataset {name!r}")
