"""Grayscale datasets: IDX files, area downscaling, synthetic fixtures.

IDX layout (big-endian): magic ``0x00000803`` + count, rows, cols, then
``uint8`` pixels for images; magic ``0x00000801`` + count, then ``uint8``
labels. Files ending in ``.gz`` are transparently (de)compressed.
"""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataError, FormatError

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


@dataclass
class Dataset:
    images: np.ndarray  # (N, H, W) in [0, 1]
    labels: np.ndarray  # (N,) int64
    class_count: int
    split: str = "all"

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 3:
            raise DataError(f"images must be (N, H, W), got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise DataError(f"{len(self.images)} images but {len(self.labels)} labels")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise DataError(f"label out of range for {self.class_count} classes")
        if self.images.size and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise DataError("pixel values outside [0, 1]")

    def __len__(self):
        return len(self.labels)

    @property
    def shape(self):
        return self.images.shape[1:]

    @property
    def X(self) -> np.ndarray:
        return self.images.reshape(len(self.images), -1)

    def subset(self, idx, split=None) -> Dataset:
        return Dataset(self.images[idx], self.labels[idx], self.class_count, split or self.split)


def _open(path, mode):
    return gzip.open(path, mode) if str(path).endswith(".gz") else open(path, mode)


def _read(path) -> bytes:
    with _open(path, "rb") as fh:
        return fh.read()


def load_idx(image_path, label_path, class_count: int = 10) -> Dataset:
    img = _read(image_path)
    lab = _read(label_path)
    if len(img) < 16:
        raise FormatError(f"{image_path}: header truncated ({len(img)} bytes, need 16)")
    magic, n, rows, cols = struct.unpack(">IIII", img[:16])
    if magic != IMAGE_MAGIC:
        raise FormatError(f"{image_path}: bad magic 0x{magic:08x} at offset 0 (want 0x{IMAGE_MAGIC:08x})")
    need = 16 + n * rows * cols
    if len(img) != need:
        raise FormatError(f"{image_path}: expected {need} bytes for {n}x{rows}x{cols}, found {len(img)} "
                          f"(mismatch from offset {min(len(img), need)})")
    if len(lab) < 8:
        raise FormatError(f"{label_path}: header truncated ({len(lab)} bytes, need 8)")
    lmagic, ln = struct.unpack(">II", lab[:8])
    if lmagic != LABEL_MAGIC:
        raise FormatError(f"{label_path}: bad magic 0x{lmagic:08x} at offset 0 (want 0x{LABEL_MAGIC:08x})")
    if len(lab) != 8 + ln:
        raise FormatError(f"{label_path}: expected {8 + ln} bytes, found {len(lab)}")
    if ln != n:
        raise FormatError(f"{n} images at offset 4 of {image_path} but {ln} labels at offset 4 of {label_path}")
    pixels = np.frombuffer(img, dtype=np.uint8, offset=16).reshape(n, rows, cols)
    labels = np.frombuffer(lab, dtype=np.uint8, offset=8).astype(np.int64)
    bad = np.flatnonzero(labels >= class_count)
    if bad.size:
        raise DataError(f"{label_path}: label {labels[bad[0]]} at offset {8 + bad[0]} "
                        f"out of range for {class_count} classes")
    return Dataset(pixels / 255.0, labels, class_count)


def save_idx(dataset: Dataset, image_path, label_path) -> None:
    if dataset.class_count > 256:
        raise DataError("IDX labels are single bytes")
    n, rows, cols = dataset.images.shape
    pixels = np.rint(dataset.images * 255.0).astype(np.uint8)
    with _open(image_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGE_MAGIC, n, rows, cols) + pixels.tobytes())
    with _open(label_path, "wb") as fh:
        fh.write(struct.pack(">II", LABEL_MAGIC, n) + dataset.labels.astype(np.uint8).tobytes())


def _area_weights(src: int, dst: int) -> np.ndarray:
    # row i: fraction of each source cell inside output cell i, normalised
    edges = np.arange(dst + 1) * (src / dst)
    w = np.zeros((dst, src))
    for i in range(dst):
        lo, hi = edges[i], edges[i + 1]
        for j in range(int(np.floor(lo)), int(np.ceil(hi))):
            w[i, j] = min(hi, j + 1) - max(lo, j)
    return w / w.sum(axis=1, keepdims=True)


def downscale(dataset: Dataset, width: int, height: int) -> Dataset:
    """Area-average to ``height x width``; fractional cell overlaps are weighted."""
    h, w = dataset.shape
    if not (0 < width <= w and 0 < height <= h):
        raise ConfigurationError(f"cannot downscale {w}x{h} to {width}x{height}")
    wr = _area_weights(h, height)
    wc = _area_weights(w, width)
    out = np.einsum("ij,njk,lk->nil", wr, dataset.images, wc)
    return replace(dataset, images=np.clip(out, 0.0, 1.0))


def synth_blobs(num_classes: int, per_class: int, size: int = 8, seed: int = 0, noise: float = 0.08) -> Dataset:
    """Noisy copies of one random prototype image per class."""
    rng = np.random.default_rng(seed)
    protos = rng.uniform(0.0, 1.0, size=(num_classes, size, size))
    labels = np.repeat(np.arange(num_classes), per_class)
    images = protos[labels] + noise * rng.standard_normal((labels.size, size, size))
    perm = rng.permutation(labels.size)
    return Dataset(np.clip(images[perm], 0.0, 1.0), labels[perm], num_classes, "synthetic")


def select_classes(dataset: Dataset, classes) -> Dataset:
    """Keep only ``classes`` and relabel them ``0..len(classes)-1`` in the given order."""
    classes = list(classes)
    lut = np.full(dataset.class_count, -1)
    lut[classes] = np.arange(len(classes))
    keep = lut[dataset.labels] >= 0
    return Dataset(dataset.images[keep], lut[dataset.labels[keep]], len(classes), dataset.split)


def split(dataset: Dataset, n_train: int, n_test: int, seed: int = 0):
    """Disjoint seeded train/test draws."""
    if n_train + n_test > len(dataset):
        raise ConfigurationError(f"need {n_train + n_test} examples, dataset has {len(dataset)}")
    perm = np.random.default_rng(seed).permutation(len(dataset))
    return (dataset.subset(perm[:n_train], "train"),
            dataset.subset(perm[n_train:n_train + n_test], "test"))


def eval_subset(dataset: Dataset, n: int = 250, seed: int = 0) -> Dataset:
    n = min(n, len(dataset))
    idx = np.sort(np.random.default_rng(seed).permutation(len(dataset))[:n])
    return dataset.subset(idx)


def default_cache_dir() -> Path:
    return Path(os.environ.get("QROBUST_DATA", Path.home() / ".cache" / "qrobust"))


def mnist5k_idx(cache_dir=None):
    """Write the 5000-image MNIST sample bundled with mlxtend as IDX files.

    Returns ``(image_path, label_path)``; existing files are reused.
    """
    cache = Path(cache_dir) if cache_dir else default_cache_dir()
    cache.mkdir(parents=True, exist_ok=True)
    img, lab = cache / "mnist5k-images-idx3-ubyte", cache / "mnist5k-labels-idx1-ubyte"
    if not (img.exists() and lab.exists()):
        from mlxtend.data import mnist_data

        X, y = mnist_data()
        ds = Dataset(X.reshape(-1, 28, 28) / 255.0, y, 10, "mnist5k")
        tmp_img, tmp_lab = img.with_suffix(".tmp"), lab.with_suffix(".tmp")
        save_idx(ds, tmp_img, tmp_lab)
        os.replace(tmp_img, img)
        os.replace(tmp_lab, lab)
    return img, lab


def load_mnist5k(cache_dir=None) -> Dataset:
    img, lab = mnist5k_idx(cache_dir)
    return replace(load_idx(img, lab), split="mnist5k")
