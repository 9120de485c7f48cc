"""MNIST IDX loading, stratified subsetting and binarization.

Images are carried as ``numpy`` arrays of shape ``(n, rows, cols)`` with
intensities in ``[0, 1]``; a binary image is a ``uint8`` array of zeros and ones.
"""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
N_CLASSES = 10


class IDXFormatError(ValueError):
    """Raised when an IDX container is malformed."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


def _read_bytes(path) -> bytes:
    path = Path(path)
    raw = path.read_bytes()
    # gzip magic; the CLI accepts both compressed and raw files
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _header(raw: bytes, n_dims: int) -> tuple[int, ...]:
    need = 4 * (1 + n_dims)
    if len(raw) < need:
        raise IDXFormatError(f"truncated header: need {need} bytes, have {len(raw)}", len(raw))
    return struct.unpack(f">{1 + n_dims}I", raw[:need])


def parse_idx_images(raw: bytes) -> np.ndarray:
    """Decode an in-memory IDX image payload into floats in [0, 1]."""
    if len(raw) >= 4:
        (magic,) = struct.unpack(">I", raw[:4])
        if magic == LABEL_MAGIC:
            raise IDXFormatError("label file passed where image file expected", 0)
        if magic != IMAGE_MAGIC:
            raise IDXFormatError(f"bad magic number 0x{magic:08x}", 0)
    magic, count, rows, cols = _header(raw, 3)
    if rows == 0 or cols == 0:
        raise IDXFormatError(f"dimension mismatch: {rows}x{cols} images", 8)
    expected = 16 + count * rows * cols
    if len(raw) != expected:
        kind = "truncated payload" if len(raw) < expected else "trailing bytes after payload"
        raise IDXFormatError(f"{kind}: expected {expected} bytes, have {len(raw)}", min(len(raw), expected))
    pixels = np.frombuffer(raw, dtype=np.uint8, offset=16).reshape(count, rows, cols)
    return pixels.astype(np.float64) / 255.0


def parse_idx_labels(raw: bytes) -> np.ndarray:
    if len(raw) >= 4:
        (magic,) = struct.unpack(">I", raw[:4])
        if magic == IMAGE_MAGIC:
            raise IDXFormatError("image file passed where label file expected", 0)
        if magic != LABEL_MAGIC:
            raise IDXFormatError(f"bad magic number 0x{magic:08x}", 0)
    magic, count = _header(raw, 1)
    expected = 8 + count
    if len(raw) != expected:
        kind = "truncated payload" if len(raw) < expected else "trailing bytes after payload"
        raise IDXFormatError(f"{kind}: expected {expected} bytes, have {len(raw)}", min(len(raw), expected))
    labels = np.frombuffer(raw, dtype=np.uint8, offset=8)
    bad = np.flatnonzero(labels >= N_CLASSES)
    if bad.size:
        i = int(bad[0])
        raise IDXFormatError(f"label value {labels[i]} outside 0..9", 8 + i)
    return labels.astype(np.int64)


def load_idx_images(path) -> np.ndarray:
    """Load an IDX3 image file (raw or gzip) as ``(n, rows, cols)`` floats in [0, 1]."""
    return parse_idx_images(_read_bytes(path))


def load_idx_labels(path) -> np.ndarray:
    """Load an IDX1 label file (raw or gzip) as an int array of class ids."""
    return parse_idx_labels(_read_bytes(path))


def encode_idx_images(images: np.ndarray) -> bytes:
    """Inverse of :func:`parse_idx_images` for images on the 1/255 lattice."""
    images = np.asarray(images)
    count, rows, cols = images.shape
    pixels = np.rint(images * 255.0).astype(np.uint8)
    return struct.pack(">4I", IMAGE_MAGIC, count, rows, cols) + pixels.tobytes()


def encode_idx_labels(labels: np.ndarray) -> bytes:
    labels = np.asarray(labels, dtype=np.uint8)
    return struct.pack(">2I", LABEL_MAGIC, labels.size) + labels.tobytes()


@dataclass
class LabeledDataset:
    images: np.ndarray
    labels: np.ndarray
    train_idx: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    test_idx: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    # row positions in the dataset this one was drawn from
    source_idx: np.ndarray | None = None

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ValueError(f"{len(self.images)} images but {len(self.labels)} labels")
        if np.intersect1d(self.train_idx, self.test_idx).size:
            raise ValueError("train and test index sets overlap")

    def __len__(self) -> int:
        return len(self.labels)


def load_mnist(root, split: str = "train") -> LabeledDataset:
    """Load the standard ``{train,t10k}-{images-idx3,labels-idx1}-ubyte[.gz]`` pair."""
    root = Path(root)
    prefix = {"train": "train", "test": "t10k"}[split]

    def find(stem: str) -> Path:
        for name in (stem, stem + ".gz"):
            if (root / name).exists():
                return root / name
        raise FileNotFoundError(f"{stem}[.gz] not found under {root}")

    images = load_idx_images(find(f"{prefix}-images-idx3-ubyte"))
    labels = load_idx_labels(find(f"{prefix}-labels-idx1-ubyte"))
    return LabeledDataset(images, labels, train_idx=np.arange(len(labels)))


def _allocate(counts: np.ndarray, n: int) -> np.ndarray:
    """Largest-remainder allocation of ``n`` draws proportional to ``counts``."""
    if n == 0:
        return np.zeros_like(counts)
    quota = counts * n / counts.sum()
    alloc = np.floor(quota).astype(np.int64)
    alloc = np.minimum(alloc, counts)
    order = np.argsort(-(quota - alloc), kind="stable")
    for c in order:
        if alloc.sum() == n:
            break
        if alloc[c] < counts[c]:
            alloc[c] += 1
    # a class may be exhausted before the remainder is placed
    while alloc.sum() < n:
        room = np.flatnonzero(alloc < counts)
        alloc[room[0]] += 1
    return alloc


def subset(dataset: LabeledDataset, n_train: int, n_test: int, seed: int = 0) -> LabeledDataset:
    """Draw a stratified, seeded train/test subset.

    The result holds ``n_train + n_test`` images, train rows first. Per-class
    counts of each part differ from exact proportionality by at most one.
    """
    total = len(dataset)
    if n_train < 0 or n_test < 0 or n_train + n_test > total:
        raise ValueError(f"cannot draw {n_train}+{n_test} images from {total}")
    rng = np.random.default_rng(seed)
    classes = np.arange(N_CLASSES)
    pools = [rng.permutation(np.flatnonzero(dataset.labels == c)) for c in classes]
    counts = np.array([len(p) for p in pools], dtype=np.int64)

    train_alloc = _allocate(counts, n_train)
    test_alloc = _allocate(counts, n_test)
    # the test draw comes from what the train draw left behind
    left = counts - train_alloc
    if np.any(test_alloc > left):
        test_alloc = _allocate(left, n_test)

    train_rows = np.concatenate([p[:k] for p, k in zip(pools, train_alloc)])
    test_rows = np.concatenate([p[a : a + k] for p, a, k in zip(pools, train_alloc, test_alloc)])
    train_rows = rng.permutation(train_rows)
    test_rows = rng.permutation(test_rows)
    rows = np.concatenate([train_rows, test_rows]).astype(np.int64)
    return LabeledDataset(
        images=dataset.images[rows],
        labels=dataset.labels[rows],
        train_idx=np.arange(n_train),
        test_idx=np.arange(n_train, n_train + n_test),
        source_idx=rows,
    )


def binarize(image: np.ndarray, threshold: float = 0.4) -> np.ndarray:
    """Foreground mask: 1 where intensity is strictly above ``threshold``."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold {threshold} outside [0, 1]")
    return (np.asarray(image) > threshold).astype(np.uint8)
