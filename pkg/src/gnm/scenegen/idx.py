"""Reading and writing MNIST-style IDX files."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IMAGES_MAGIC = 2051
LABELS_MAGIC = 2049


class IdxError(ValueError):
    pass


class BadMagic(IdxError):
    pass


class CountMismatch(IdxError):
    pass


class Truncated(IdxError):
    pass


@dataclass
class DigitBank:
    images: np.ndarray  # (N, 28, 28) float32 in [0, 1]
    labels: np.ndarray  # (N,) int64 in 0..9
    split: str = "train"

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise CountMismatch(f"{len(self.images)} images vs {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() > 9):
            raise ValueError("digit labels must lie in 0..9")
        self._by_class = None

    def __len__(self):
        return len(self.labels)

    def indices_of(self, cls: int) -> np.ndarray:
        if self._by_class is None:
            self._by_class = {c: np.flatnonzero(self.labels == c) for c in range(10)}
        idx = self._by_class[cls]
        if len(idx) == 0:
            raise ValueError(f"digit bank has no samples of class {cls}")
        return idx


def _read_header(buf: bytes, magic: int, path) -> tuple[int, ...]:
    if len(buf) < 4:
        raise Truncated(f"{path}: missing magic number")
    (found,) = struct.unpack(">I", buf[:4])
    if found != magic:
        raise BadMagic(f"{path}: magic {found}, expected {magic}")
    ndim = found & 0xFF
    end = 4 + 4 * ndim
    if len(buf) < end:
        raise Truncated(f"{path}: header shorter than {ndim} dimensions")
    return struct.unpack(f">{ndim}I", buf[4:end])


def _read_payload(path, magic: int) -> np.ndarray:
    buf = Path(path).read_bytes()
    dims = _read_header(buf, magic, path)
    offset = 4 + 4 * len(dims)
    need = int(np.prod(dims))
    if len(buf) - offset < need:
        raise Truncated(f"{path}: header declares {need} bytes, payload has {len(buf) - offset}")
    return np.frombuffer(buf, dtype=np.uint8, count=need, offset=offset).reshape(dims)


def load_mnist_idx(images_path, labels_path, split: str = "train") -> DigitBank:
    images = _read_payload(images_path, IMAGES_MAGIC)
    labels = _read_payload(labels_path, LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise CountMismatch(f"{images.shape[0]} images vs {labels.shape[0]} labels")
    return DigitBank(images.astype(np.float32) / 255.0, labels.astype(np.int64), split)


def write_idx_images(path, images: np.ndarray) -> None:
    """Write a uint8 (N, rows, cols) array as an IDX3 file."""
    images = np.asarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGES_MAGIC, n, rows, cols))
        fh.write(images.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", LABELS_MAGIC, len(labels)))
        fh.write(labels.tobytes())
