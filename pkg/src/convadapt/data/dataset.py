"""In-memory datasets, deterministic splits and the PETD container format.

Container layout (little-endian)::

    b"PETD"  version:u32  class_count:u32  sample_count:u32
    per sample: label:u32  C:u32  H:u32  W:u32  pixels:u8*(C*H*W)
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from ..errors import ConfigurationError, ParseError

MAGIC = b"PETD"
VERSION = 1
SPLITS = ("train", "val", "test")


@dataclass
class Dataset:
    """Uint8 pixels plus normalised float images, labels and split tags."""

    pixels: np.ndarray  # (N, C, H, W) uint8
    labels: np.ndarray  # (N,) int64
    class_count: int
    split: np.ndarray = None  # (N,) tag per sample
    mean: Tuple[float, ...] = (0.5,)
    std: Tuple[float, ...] = (0.25,)
    images: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.pixels = np.ascontiguousarray(self.pixels, dtype=np.uint8)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.pixels.ndim != 4 or len(self.pixels) != len(self.labels):
            raise ConfigurationError(f"pixels must be (N, C, H, W) with one label each; got {self.pixels.shape} and {self.labels.shape}")
        if self.class_count < 1:
            raise ConfigurationError("class_count must be positive")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            bad = int(self.labels[(self.labels < 0) | (self.labels >= self.class_count)][0])
            raise ConfigurationError(f"label {bad} outside [0, {self.class_count})")
        if self.split is None:
            self.split = np.full(len(self.labels), "train", dtype="<U5")
        self.split = np.asarray(self.split, dtype="<U5")
        if self.split.shape != self.labels.shape or not set(np.unique(self.split)) <= set(SPLITS):
            raise ConfigurationError(f"split tags must be one of {SPLITS} per sample")
        c = self.pixels.shape[1]
        mean = np.broadcast_to(np.asarray(self.mean, dtype=np.float32), (c,))
        std = np.broadcast_to(np.asarray(self.std, dtype=np.float32), (c,))
        self.images = ((self.pixels.astype(np.float32) / 255.0) - mean[None, :, None, None]) / std[None, :, None, None]

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def image_shape(self) -> tuple:
        return self.pixels.shape[1:]

    def indices(self, split: str) -> np.ndarray:
        return np.flatnonzero(self.split == split)

    def take(self, idx: Sequence[int], split: Optional[Sequence[str]] = None) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        tags = self.split[idx] if split is None else split
        return Dataset(self.pixels[idx], self.labels[idx], self.class_count, tags, self.mean, self.std)

    def subset(self, split: str) -> "Dataset":
        return self.take(self.indices(split))

    def class_counts(self, split: Optional[str] = None) -> np.ndarray:
        labels = self.labels if split is None else self.labels[self.split == split]
        return np.bincount(labels, minlength=self.class_count)


def concat(parts: Sequence[Dataset]) -> Dataset:
    first = parts[0]
    return Dataset(
        np.concatenate([p.pixels for p in parts]),
        np.concatenate([p.labels for p in parts]),
        first.class_count,
        np.concatenate([p.split for p in parts]),
        first.mean,
        first.std,
    )


def make_splits(dataset: Dataset, seed: int, val_fraction: float = 0.2, test_fraction: float = 0.0) -> Dataset:
    """Re-tag samples into train/val/test, stratified per class and seeded.

    ``val_fraction`` is taken out of what remains after the test split, so
    validation is 20% of the training data by default.
    """
    rng = np.random.default_rng(seed)
    tags = np.full(len(dataset), "train", dtype="<U5")
    for c in range(dataset.class_count):
        idx = np.flatnonzero(dataset.labels == c)
        idx = idx[rng.permutation(len(idx))]
        n_test = int(round(test_fraction * len(idx)))
        n_val = int(round(val_fraction * (len(idx) - n_test)))
        tags[idx[:n_test]] = "test"
        tags[idx[n_test : n_test + n_val]] = "val"
    return Dataset(dataset.pixels, dataset.labels, dataset.class_count, tags, dataset.mean, dataset.std)


def split_train_val(dataset: Dataset, seed: int, val_fraction: float = 0.2) -> Dataset:
    """Carve a seeded validation split out of the ``train`` samples only."""
    rng = np.random.default_rng(seed)
    tags = dataset.split.copy()
    for c in range(dataset.class_count):
        idx = np.flatnonzero((dataset.labels == c) & (dataset.split == "train"))
        idx = idx[rng.permutation(len(idx))]
        tags[idx[: int(round(val_fraction * len(idx)))]] = "val"
    return Dataset(dataset.pixels, dataset.labels, dataset.class_count, tags, dataset.mean, dataset.std)


def encode_container(pixels: np.ndarray, labels: np.ndarray, class_count: int) -> bytes:
    pixels = np.asarray(pixels, dtype=np.uint8)
    labels = np.asarray(labels)
    parts = [MAGIC, struct.pack("<III", VERSION, class_count, len(labels))]
    for img, lab in zip(pixels, labels):
        c, h, w = img.shape
        parts.append(struct.pack("<IIII", int(lab), c, h, w))
        parts.append(np.ascontiguousarray(img).tobytes())
    return b"".join(parts)


def decode_container(blob: bytes):
    """Return (pixels list, labels, class_count); raises ParseError with a byte offset."""
    if len(blob) < 16:
        raise ParseError("container header truncated", len(blob))
    if blob[:4] != MAGIC:
        raise ParseError("bad container magic", 0)
    version, class_count, count = struct.unpack_from("<III", blob, 4)
    if version != VERSION:
        raise ParseError(f"unsupported container version {version}", 4)
    off = 16
    images, labels = [], []
    for i in range(count):
        if off + 16 > len(blob):
            raise ParseError(f"sample {i} header truncated", off)
        lab, c, h, w = struct.unpack_from("<IIII", blob, off)
        off += 16
        n = c * h * w
        if off + n > len(blob):
            raise ParseError(f"sample {i} pixels truncated", off)
        images.append(np.frombuffer(blob, dtype=np.uint8, count=n, offset=off).reshape(c, h, w))
        labels.append(lab)
        off += n
    if off != len(blob):
        raise ParseError(f"{len(blob) - off} trailing bytes after {count} samples", off)
    return images, np.asarray(labels, dtype=np.int64), class_count


def write_container(path: os.PathLike, dataset: Dataset) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_container(dataset.pixels, dataset.labels, dataset.class_count))


def load_dataset(path: os.PathLike, format: str = "petd", mean=(0.5,), std=(0.25,)) -> Dataset:
    """Read a container; samples keep file order and are all tagged ``train``."""
    if format != "petd":
        raise ConfigurationError(f"unsupported dataset format {format!r}; only 'petd' is supported")
    with open(path, "rb") as fh:
        blob = fh.read()
    images, labels, class_count = decode_container(blob)
    shapes = {im.shape for im in images}
    if len(shapes) > 1:
        raise ConfigurationError(f"container mixes image shapes {sorted(shapes)}; resize before packing")
    pixels = np.stack(images) if images else np.zeros((0, 1, 1, 1), dtype=np.uint8)
    bad = labels[(labels >= class_count)]
    if bad.size:
        raise ConfigurationError(f"label {int(bad[0])} outside [0, {class_count})")
    return Dataset(pixels, labels, class_count, mean=mean, std=std)
