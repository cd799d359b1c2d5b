"""Dataset container, IDX file interchange, and synthetic generators.

IDX is the minimal big-endian binary tensor format: a four-byte magic
``00 00 <dtype> <ndim>`` (0x08 = unsigned byte), one big-endian u32
extent per dimension, then the raw payload.  Images ship as u8 tensors
scaled to [0, 1] on load; grayscale replicates to three channels on
demand so any dataset feeds the three-channel stem.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

IDX_DTYPE_U8 = 0x08


@dataclass
class Dataset:
    images: np.ndarray       # [N, C, H, W] floats in [0, 1]
    labels: np.ndarray       # [N] integer class ids
    num_classes: int
    split: str = "train"

    def __post_init__(self):
        self.images = np.asarray(self.images)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise ValueError(f"images must be [N,C,H,W], got {self.images.shape}")
        if self.labels.ndim != 1 or self.labels.shape[0] != self.images.shape[0]:
            raise ValueError(
                f"label count {self.labels.shape} does not match image count {self.images.shape[0]}"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels outside [0, {self.num_classes})")
        lo, hi = float(self.images.min(initial=0.0)), float(self.images.max(initial=0.0))
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"image values outside [0,1]: range [{lo}, {hi}]")

    def __len__(self):
        return self.images.shape[0]

    def with_channels(self, channels):
        """Replicate grayscale to the requested channel count."""
        if self.images.shape[1] == channels:
            return self
        if self.images.shape[1] != 1:
            raise ValueError(f"cannot map {self.images.shape[1]} channels to {channels}")
        return Dataset(np.repeat(self.images, channels, axis=1), self.labels,
                       self.num_classes, self.split)

    def subset(self, indices, split=None):
        return Dataset(self.images[indices], self.labels[indices],
                       self.num_classes, split or self.split)


# ----------------------------------------------------------------------
# IDX parsing

def read_idx(path):
    """Parse one IDX file into a numpy array (u8 payloads only)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4:
        raise ValueError(f"{path}: truncated header")
    zero1, zero2, dtype, ndim = blob[0], blob[1], blob[2], blob[3]
    if zero1 or zero2 or dtype != IDX_DTYPE_U8 or not 1 <= ndim <= 4:
        raise ValueError(f"{path}: bad magic {blob[:4].hex()}")
    header_end = 4 + 4 * ndim
    if len(blob) < header_end:
        raise ValueError(f"{path}: truncated extents")
    extents = struct.unpack(f">{ndim}I", blob[4:header_end])
    expected = int(np.prod(extents))
    payload = blob[header_end:]
    if len(payload) != expected:
        raise ValueError(f"{path}: payload {len(payload)} bytes, extents need {expected}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(extents)


def write_idx(path, array):
    arr = np.ascontiguousarray(array, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(bytes([0, 0, IDX_DTYPE_U8, arr.ndim]))
        fh.write(struct.pack(f">{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes())


def load_idx(images_path, labels_path, num_classes=None, split="train", channels=None):
    """Load an image/label IDX pair into a Dataset.

    Images may be [N,H,W] (grayscale) or [N,H,W,3]; pixel bytes scale to
    [0, 1].  The class count defaults to ``max(label) + 1``.
    """
    raw_images = read_idx(images_path)
    raw_labels = read_idx(labels_path)
    if raw_labels.ndim != 1:
        raise ValueError(f"{labels_path}: labels must be one-dimensional")
    if raw_images.shape[0] != raw_labels.shape[0]:
        raise ValueError(
            f"image count {raw_images.shape[0]} != label count {raw_labels.shape[0]}"
        )
    if raw_images.ndim == 3:
        images = raw_images[:, None, :, :]
    elif raw_images.ndim == 4 and raw_images.shape[-1] in (1, 3):
        images = raw_images.transpose(0, 3, 1, 2)
    else:
        raise ValueError(f"{images_path}: unsupported image extents {raw_images.shape}")
    images = images.astype(np.float64) / 255.0
    labels = raw_labels.astype(np.int64)
    if num_classes is None:
        num_classes = int(labels.max()) + 1 if labels.size else 1
    ds = Dataset(images, labels, num_classes, split)
    return ds.with_channels(channels) if channels else ds


def save_dataset_idx(dataset, images_path, labels_path):
    """Write a Dataset back to an IDX pair (quantized to u8)."""
    images = np.round(dataset.images * 255.0).astype(np.uint8)
    if images.shape[1] == 1:
        write_idx(images_path, images[:, 0])
    else:
        write_idx(images_path, images.transpose(0, 2, 3, 1))
    write_idx(labels_path, dataset.labels.astype(np.uint8))


def resize_nearest(images, size):
    """Nearest-neighbor resize of an [N,C,H,W] stack to size x size."""
    n, c, h, w = images.shape
    rows = (np.arange(size) * h) // size
    cols = (np.arange(size) * w) // size
    return images[:, :, rows][:, :, :, cols]


# ----------------------------------------------------------------------
# synthetic data

def make_pattern_dataset(n_samples, n_classes, size=32, channels=3, noise=0.12,
                         seed=0, split="train"):
    """Class-anchored random patterns plus pixel noise.

    Each class owns a fixed random template; samples are the template
    with additive noise, clipped to [0,1].  Learnable but not linearly
    trivial - used by the training-convergence checks.
    """
    rng = np.random.default_rng(seed)
    templates = rng.uniform(0.15, 0.85, size=(n_classes, channels, size, size))
    labels = rng.integers(0, n_classes, size=n_samples)
    images = templates[labels] + rng.normal(scale=noise, size=(n_samples, channels, size, size))
    return Dataset(np.clip(images, 0.0, 1.0), labels, n_classes, split)


def make_separable_dataset(n_samples, size=32, channels=3, noise=0.05, seed=0, split="train"):
    """Two classes split by mean brightness of the left vs right half."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, size=n_samples)
    images = rng.uniform(0.2, 0.4, size=(n_samples, channels, size, size))
    half = size // 2
    for i, y in enumerate(labels):
        if y == 0:
            images[i, :, :, :half] += 0.4
        else:
            images[i, :, :, half:] += 0.4
    images += rng.normal(scale=noise, size=images.shape)
    return Dataset(np.clip(images, 0.0, 1.0), labels, 2, split)
