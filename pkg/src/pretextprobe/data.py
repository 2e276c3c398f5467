"""Dataset container and the ``KPD1`` binary file format.

Layout (all integers little-endian)::

    b"KPD1"  u32 version  u32 n  u32 C  u32 H  u32 W
    n*C*H*W  f32 pixel values
    u8 has_labels   [n x u32 labels if has_labels == 1]
    u32 num_classes
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from pretextprobe.errors import CoverageError, DataError, FormatError

MAGIC = b"KPD1"
VERSION = 1
_MAX_DIM = 1 << 24


@dataclass
class Dataset:
    """Images ``(n, C, H, W)`` in [0, 1] with optional integer labels.

    ``ids`` tracks each sample's index in the dataset it was drawn from, so
    per-sample random streams survive subsetting.
    """

    images: np.ndarray
    labels: np.ndarray | None = None
    num_classes: int = 0
    ids: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.images = np.ascontiguousarray(self.images, dtype=np.float32)
        if self.images.ndim != 4:
            raise DataError(f"images must be (n, C, H, W), got shape {self.images.shape}")
        n = self.images.shape[0]
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
            if self.labels.shape[0] != n:
                raise DataError(f"{self.labels.shape[0]} labels for {n} images")
            if n and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
                raise DataError(f"labels outside [0, {self.num_classes})")
        if self.ids is None:
            self.ids = np.arange(n, dtype=np.int64)
        else:
            self.ids = np.asarray(self.ids, dtype=np.int64).reshape(-1)
            if self.ids.shape[0] != n:
                raise DataError("ids length differs from sample count")

    def __len__(self) -> int:
        return int(self.images.shape[0])

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    @property
    def has_labels(self) -> bool:
        return self.labels is not None

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        if index.dtype == bool:
            index = np.flatnonzero(index)
        labels = None if self.labels is None else self.labels[index]
        return Dataset(self.images[index], labels, self.num_classes, self.ids[index])

    def unlabeled(self) -> "Dataset":
        return Dataset(self.images, None, self.num_classes, self.ids)

    def require_labels(self) -> np.ndarray:
        if self.labels is None:
            raise DataError("dataset has no labels")
        return self.labels

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.require_labels(), minlength=self.num_classes)

    def require_coverage(self) -> None:
        counts = self.class_counts()
        missing = np.flatnonzero(counts == 0)
        if missing.size:
            raise CoverageError(f"no labeled examples for classes {missing.tolist()}")


def stratified_sample(ds: Dataset, per_class: int, rng: np.random.Generator) -> Dataset:
    """Draw ``per_class`` examples from each class (fewer if a class is short).

    Without labels, draws ``per_class * num_classes`` examples uniformly.
    Selected examples keep their original relative order.
    """
    if ds.labels is None:
        k = min(len(ds), per_class * max(ds.num_classes, 1))
        chosen = rng.choice(len(ds), size=k, replace=False)
        return ds.subset(np.sort(chosen))
    chosen = []
    for c in range(ds.num_classes):
        members = np.flatnonzero(ds.labels == c)
        k = min(per_class, members.size)
        if k:
            chosen.append(rng.choice(members, size=k, replace=False))
    if not chosen:
        return ds.subset(np.array([], dtype=np.int64))
    return ds.subset(np.sort(np.concatenate(chosen)))


def write_dataset(path, ds: Dataset) -> None:
    n, c, h, w = ds.images.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<5I", VERSION, n, c, h, w))
        fh.write(ds.images.astype("<f4", copy=False).tobytes(order="C"))
        if ds.labels is None:
            fh.write(b"\x00")
        else:
            fh.write(b"\x01")
            fh.write(ds.labels.astype("<u4").tobytes())
        fh.write(struct.pack("<I", ds.num_classes))


def read_dataset(path) -> Dataset:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}")
    if len(raw) < 24:
        raise FormatError(f"{path}: truncated header")
    version, n, c, h, w = struct.unpack_from("<5I", raw, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if max(n, c, h, w) > _MAX_DIM or n * c * h * w > (1 << 34):
        raise FormatError(f"{path}: dimensions overflow ({n}, {c}, {h}, {w})")
    pos = 24
    count = n * c * h * w
    end = pos + 4 * count
    if len(raw) < end + 1:
        raise FormatError(f"{path}: truncated pixel data")
    images = np.frombuffer(raw, dtype="<f4", count=count, offset=pos).reshape(n, c, h, w)
    pos = end
    has_labels = raw[pos]
    pos += 1
    labels = None
    if has_labels == 1:
        if len(raw) < pos + 4 * n:
            raise FormatError(f"{path}: truncated labels")
        labels = np.frombuffer(raw, dtype="<u4", count=n, offset=pos).astype(np.int64)
        pos += 4 * n
    elif has_labels != 0:
        raise FormatError(f"{path}: has_labels byte is {has_labels}")
    if len(raw) < pos + 4:
        raise FormatError(f"{path}: missing class count")
    (num_classes,) = struct.unpack_from("<I", raw, pos)
    if pos + 4 != len(raw):
        raise FormatError(f"{path}: {len(raw) - pos - 4} trailing bytes")
    return Dataset(images.astype(np.float32), labels, int(num_classes))
