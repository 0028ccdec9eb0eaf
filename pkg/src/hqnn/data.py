"""MNIST ingestion from IDX files, four-class filtering and stratified splits."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
CLASSES = (0, 1, 2, 3)


class IDXError(ValueError):
    pass


class IDXFormatError(IDXError):
    """Wrong magic number or unexpected dimensions."""


class IDXTruncatedError(IDXError):
    pass


class IDXCountMismatchError(IDXError):
    pass


class InsufficientSamplesError(ValueError):
    pass


def _read_bytes(path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as f:
        return f.read()


def read_idx_images(path) -> np.ndarray:
    buf = _read_bytes(path)
    if len(buf) < 16:
        raise IDXTruncatedError(f"{path}: header needs 16 bytes, file has {len(buf)}")
    magic, count, rows, cols = struct.unpack(">IIII", buf[:16])
    if magic != IMAGE_MAGIC:
        raise IDXFormatError(f"{path}: image magic 0x{magic:08x}, expected 0x{IMAGE_MAGIC:08x}")
    if (rows, cols) != (28, 28):
        raise IDXFormatError(f"{path}: images are {rows}x{cols}, expected 28x28")
    need = 16 + count * rows * cols
    if len(buf) < need:
        raise IDXTruncatedError(f"{path}: expected {need} bytes for {count} images, got {len(buf)}")
    return np.frombuffer(buf, dtype=np.uint8, count=count * rows * cols, offset=16).reshape(count, rows, cols)


def read_idx_labels(path) -> np.ndarray:
    buf = _read_bytes(path)
    if len(buf) < 8:
        raise IDXTruncatedError(f"{path}: header needs 8 bytes, file has {len(buf)}")
    magic, count = struct.unpack(">II", buf[:8])
    if magic != LABEL_MAGIC:
        raise IDXFormatError(f"{path}: label magic 0x{magic:08x}, expected 0x{LABEL_MAGIC:08x}")
    if len(buf) < 8 + count:
        raise IDXTruncatedError(f"{path}: expected {8 + count} bytes for {count} labels, got {len(buf)}")
    return np.frombuffer(buf, dtype=np.uint8, count=count, offset=8)


def load_idx(images_path, labels_path) -> tuple[np.ndarray, np.ndarray]:
    """Raw pixels (N, 28, 28) as float64 in 0..255 and integer labels (N,)."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if len(images) != len(labels):
        raise IDXCountMismatchError(f"{len(images)} images but {len(labels)} labels")
    return images.astype(np.float64), labels.astype(np.int64)


def write_idx(images, labels, images_path, labels_path) -> None:
    """Write uint8 images/labels in IDX layout (gzip when the path ends in .gz)."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    for path, payload in (
        (images_path, struct.pack(">IIII", IMAGE_MAGIC, len(images), 28, 28) + images.tobytes()),
        (labels_path, struct.pack(">II", LABEL_MAGIC, len(labels)) + labels.tobytes()),
    ):
        path = Path(path)
        opener = (lambda p: gzip.GzipFile(p, "wb", mtime=0)) if path.suffix == ".gz" else (lambda p: open(p, "wb"))
        with opener(path) as f:
            f.write(payload)


def find_idx_files(data_dir) -> tuple[Path, Path]:
    """Locate an images/labels pair in ``data_dir`` (plain or gzipped)."""
    data_dir = Path(data_dir)
    for prefix in ("train", "t10k"):
        for ext in ("", ".gz"):
            img = data_dir / f"{prefix}-images-idx3-ubyte{ext}"
            lab = data_dir / f"{prefix}-labels-idx1-ubyte{ext}"
            if img.exists() and lab.exists():
                return img, lab
    raise FileNotFoundError(f"no MNIST IDX image/label pair found in {data_dir}")


@dataclass
class DatasetSplit:
    images: np.ndarray  # (N, 28, 28) in [0, 1], or (N, F) feature vectors
    labels: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ValueError("images and labels differ in length")

    def __len__(self):
        return len(self.labels)

    def batches(self, size: int, rng: np.random.Generator | None = None):
        order = np.arange(len(self)) if rng is None else rng.permutation(len(self))
        for start in range(0, len(self), size):
            idx = order[start:start + size]
            yield self.images[idx], self.labels[idx]


def filter_and_normalize(raw, classes=CLASSES) -> DatasetSplit:
    images, labels = raw
    keep = np.isin(labels, classes)
    return DatasetSplit(np.asarray(images)[keep] / 255.0, np.asarray(labels)[keep],
                        {"classes": list(classes), "indices": np.flatnonzero(keep).tolist()})


def stratified_split(pool: DatasetSplit, train_per_class: int, val_per_class: int,
                     seed: int) -> tuple[DatasetSplit, DatasetSplit]:
    rng = np.random.default_rng(seed)
    train_idx, val_idx = [], []
    for c in np.unique(pool.labels):
        members = np.flatnonzero(pool.labels == c)
        if len(members) < train_per_class + val_per_class:
            raise InsufficientSamplesError(
                f"class {c} has {len(members)} samples, need {train_per_class + val_per_class}")
        chosen = rng.permutation(members)
        train_idx.append(chosen[:train_per_class])
        val_idx.append(chosen[train_per_class:train_per_class + val_per_class])
    train_idx = np.sort(np.concatenate(train_idx))
    val_idx = np.sort(np.concatenate(val_idx))

    def subset(idx, name):
        return DatasetSplit(pool.images[idx], pool.labels[idx],
                            {"split": name, "seed": seed, "indices": idx.tolist(),
                             "counts": np.bincount(pool.labels[idx]).tolist()})

    return subset(train_idx, "train"), subset(val_idx, "val")


def load_feature_file(path) -> DatasetSplit:
    """Comma-separated records ``label,f1,...,fK``, one per line."""
    labels, rows = [], []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            try:
                labels.append(int(parts[0]))
                rows.append([float(v) for v in parts[1:]])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    widths = {len(r) for r in rows}
    if len(widths) > 1:
        raise ValueError(f"{path}: records have differing feature counts {sorted(widths)}")
    return DatasetSplit(np.array(rows, dtype=float), np.array(labels, dtype=np.int64), {"source": str(path)})


def write_feature_file(split: DatasetSplit, path) -> None:
    with open(path, "w") as f:
        for label, feats in zip(split.labels, split.images):
            f.write(",".join([str(int(label))] + [repr(float(v)) for v in feats]) + "\n")
