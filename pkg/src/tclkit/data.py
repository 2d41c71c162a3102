"""Datasets: IDX binary ingestion, IDX writing, and a synthetic
class-template generator.

The IDX layout is the big-endian MNIST one: two zero magic bytes, a
type byte (only 0x08, unsigned byte, is supported), a dimension-count
byte, that many big-endian uint32 sizes, then the raw values.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from math import prod
from pathlib import Path

import numpy as np


IDX_TYPE_UBYTE = 0x08


class IdxFormatError(ValueError):
    """Malformed IDX header or unsupported encoding."""


class IdxConsistencyError(ValueError):
    """Image and label files disagree on the sample count."""


class IdxTruncatedError(OSError):
    """File ends before the header or payload is complete."""


@dataclass
class Dataset:
    """Images (N, C, H, W) scaled to [0, 1] with integer labels."""

    images: np.ndarray
    labels: np.ndarray
    num_classes: int
    split: str = "train"
    channel_mean: np.ndarray = field(default=None)
    channel_std: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.images.ndim != 4:
            raise ValueError(f"images must be (N, C, H, W), got {self.images.shape}")
        n = self.images.shape[0]
        if n < 1:
            raise ValueError("dataset must hold at least one sample")
        if self.labels.shape != (n,):
            raise IdxConsistencyError(
                f"{n} images but {self.labels.shape[0]} labels"
            )
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise ValueError(
                f"labels must lie in [0, {self.num_classes})"
            )
        if self.channel_mean is None:
            self.channel_mean = self.images.mean(axis=(0, 2, 3))
        if self.channel_std is None:
            self.channel_std = self.images.std(axis=(0, 2, 3))

    def __len__(self):
        return self.images.shape[0]


def _read_idx(path) -> np.ndarray:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 4:
        raise IdxTruncatedError(f"{path}: file too short for an IDX header")
    if raw[0] != 0 or raw[1] != 0:
        raise IdxFormatError(f"{path}: bad magic bytes {raw[0]:#04x} {raw[1]:#04x}")
    type_byte, ndim = raw[2], raw[3]
    if type_byte != IDX_TYPE_UBYTE:
        raise IdxFormatError(f"{path}: unsupported type byte {type_byte:#04x}")
    if not 1 <= ndim <= 4:
        raise IdxFormatError(f"{path}: unsupported dimension count {ndim}")
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IdxTruncatedError(f"{path}: truncated dimension table")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    if any(d == 0 for d in dims):
        raise IdxFormatError(f"{path}: zero-sized dimension in {dims}")
    expected = prod(dims)
    payload = raw[header:]
    if len(payload) < expected:
        raise IdxTruncatedError(
            f"{path}: expected {expected} value bytes, found {len(payload)}"
        )
    if len(payload) > expected:
        raise IdxFormatError(
            f"{path}: {len(payload) - expected} trailing bytes after payload"
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def load_idx(images_path, labels_path, split: str = "train",
             num_classes: int = None) -> Dataset:
    """Load an IDX image/label pair as a Dataset.

    3-D image files become (N, 1, H, W); 4-D files map to (N, C, H, W).
    Pixel bytes are scaled by 1/255.
    """
    images = _read_idx(images_path)
    labels = _read_idx(labels_path)
    if labels.ndim != 1:
        raise IdxFormatError(f"{labels_path}: label file must be 1-D")
    if images.ndim == 3:
        images = images[:, None, :, :]
    elif images.ndim != 4:
        raise IdxFormatError(
            f"{images_path}: image file must be 3-D or 4-D, got {images.ndim}-D"
        )
    if images.shape[0] != labels.shape[0]:
        raise IdxConsistencyError(
            f"{images.shape[0]} images but {labels.shape[0]} labels"
        )
    if num_classes is None:
        num_classes = int(labels.max()) + 1
    return Dataset(
        images=np.ascontiguousarray(images, dtype=np.float64) / 255.0,
        labels=labels.astype(np.int64),
        num_classes=num_classes,
        split=split,
    )


def save_idx(dataset: Dataset, images_path, labels_path):
    """Write a Dataset as an IDX pair, quantizing pixels to bytes."""
    if dataset.num_classes > 256:
        raise ValueError("IDX ubyte labels support at most 256 classes")
    images = np.clip(np.rint(dataset.images * 255.0), 0, 255).astype(np.uint8)
    if images.shape[1] == 1:
        images = images[:, 0]
    with open(images_path, "wb") as f:
        f.write(struct.pack(f">BBBB{images.ndim}I", 0, 0, IDX_TYPE_UBYTE,
                            images.ndim, *images.shape))
        f.write(images.tobytes())
    labels = dataset.labels.astype(np.uint8)
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">BBBBI", 0, 0, IDX_TYPE_UBYTE, 1, labels.shape[0]))
        f.write(labels.tobytes())


_SPLIT_CODES = {"train": 1, "test": 2}


def _split_code(split: str) -> int:
    return _SPLIT_CODES.get(split, 16 + zlib.crc32(split.encode()))


def synthetic_dataset(num_classes: int, samples: int, shape,
                      noise: float = 0.1, seed: int = 0,
                      split: str = "train") -> Dataset:
    """Class-template images with Gaussian noise, clipped to [0, 1].

    Each class gets a fixed random template drawn from the seed alone,
    so train and test splits of the same seed share templates while
    drawing independent noise. Labels are assigned round-robin, making
    class counts as even as the total allows. Separability is
    controlled by `noise`; at noise 0 every sample equals its template.
    """
    if num_classes < 1 or samples < 1:
        raise ValueError("num_classes and samples must be positive")
    shape = tuple(int(d) for d in shape)
    templates = np.random.default_rng([int(seed), 0]).uniform(
        0.0, 1.0, size=(num_classes, *shape))
    labels = np.arange(samples, dtype=np.int64) % num_classes
    images = templates[labels]
    if noise > 0:
        rng = np.random.default_rng([int(seed), _split_code(split)])
        images = images + rng.normal(0.0, noise, size=images.shape)
        images = np.clip(images, 0.0, 1.0)
    else:
        images = images.copy()
    return Dataset(images=images, labels=labels, num_classes=num_classes,
                   split=split)
