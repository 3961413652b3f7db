"""Datasets: MNIST IDX parsing, the synthetic overfitting toy, and
membership splits."""
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from .attack import MembershipSplit
from .errors import DataError, FormatError, LengthError
from .rng import stream

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    classes: int
    provenance: str = "synthetic"
    seed: Optional[int] = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise DataError("dataset needs a non-empty (N, d) feature matrix")
        if self.labels.shape != (self.features.shape[0],):
            raise DataError("one label per row required")
        if self.labels.min() < 0 or self.labels.max() >= self.classes:
            raise DataError(f"labels outside [0, {self.classes})")
        if not np.all(np.isfinite(self.features)):
            raise DataError("features must be finite")

    def __len__(self):
        return self.labels.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx], self.classes, self.provenance, self.seed)


def _read_idx(path, expected_magic: int, what: str) -> Tuple[tuple, bytes]:
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise LengthError(f"{path}: file too short for an IDX header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise FormatError(f"{path}: bad {what} magic 0x{magic:08X}, expected 0x{expected_magic:08X}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise LengthError(f"{path}: truncated IDX header")
    dims = struct.unpack(">" + "I" * ndim, raw[4:header])
    need = int(np.prod(dims, dtype=np.int64))
    body = raw[header:]
    if len(body) < need:
        raise LengthError(f"{path}: expected {need} data bytes, found {len(body)}")
    return dims, body[:need]


def load_mnist_idx(images_path, labels_path) -> Dataset:
    """Parse big-endian IDX image/label files; pixels scaled to [0, 1]."""
    idims, ibody = _read_idx(images_path, IMAGE_MAGIC, "image")
    ldims, lbody = _read_idx(labels_path, LABEL_MAGIC, "label")
    if idims[0] != ldims[0]:
        raise FormatError(f"{idims[0]} images but {ldims[0]} labels")
    images = np.frombuffer(ibody, dtype=np.uint8).reshape(idims[0], -1)
    labels = np.frombuffer(lbody, dtype=np.uint8).astype(np.int64)
    return Dataset(images.astype(np.float64) / 255.0, labels, 10, "mnist")


def write_idx(path, array: np.ndarray):
    """Write a uint8 array as an IDX file (used for fixtures and exports)."""
    array = np.asarray(array, dtype=np.uint8)
    magic = 0x00000800 | array.ndim
    header = struct.pack(">I", magic) + struct.pack(">" + "I" * array.ndim, *array.shape)
    Path(path).write_bytes(header + array.tobytes())


def _class_means(rng, d, k, separation):
    if d >= k:
        q, _ = np.linalg.qr(rng.normal(size=(d, k)))
        return separation * q.T
    dirs = rng.normal(size=(k, d))
    return separation * dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def synth_overfit_toy(n_members: int, n_nonmembers: int, d: int, k: int, seed: int,
                      separation: float = 3.0, label_noise: float = 0.0,
                      n_holdout: int = 0):
    """Gaussian class clusters (unit covariance) for members and non-members.

    Class means sit at distance ``separation`` from the origin along
    orthonormal directions (random unit directions when d < k).  A fraction
    ``label_noise`` of labels is redrawn uniformly, which gives a small
    member set something to memorise.  Returns ``(members, nonmembers)``,
    plus a holdout set drawn from the same distribution when
    ``n_holdout > 0``.
    """
    if min(n_members, n_nonmembers, d, k) < 1:
        raise DataError("all toy dataset sizes must be >= 1")
    means = _class_means(stream(seed, "dataset", 0), d, k, separation)

    def draw(n, part):
        rng = stream(seed, "dataset", part)
        y = rng.integers(0, k, size=n)
        x = means[y] + rng.normal(size=(n, d))
        flip = rng.random(n) < label_noise
        y = np.where(flip, rng.integers(0, k, size=n), y)
        return Dataset(x, y, k, "synthetic", seed)

    out = (draw(n_members, 1), draw(n_nonmembers, 2))
    if n_holdout > 0:
        out = out + (draw(n_holdout, 3),)
    return out


def membership_split(train: Dataset, test: Dataset, seed: int):
    """(in_loop, final_eval) splits over complementary halves of train and test.

    The in-loop split takes half of ``train`` as D and half of ``test`` as
    D'; the final-evaluation split takes the other halves.
    """
    if len(train) < 2 or len(test) < 2:
        raise DataError("need at least two samples on each side to split")
    pt = stream(seed, "split", 0).permutation(len(train))
    pn = stream(seed, "split", 1).permutation(len(test))
    ht, hn = len(train) // 2, len(test) // 2

    def make(ti, ni):
        ti, ni = np.sort(ti), np.sort(ni)
        return MembershipSplit(train.features[ti], train.labels[ti], test.features[ni], test.labels[ni], ti, ni)

    return make(pt[:ht], pn[:hn]), make(pt[ht:], pn[hn:])


def full_split(train: Dataset, test: Dataset) -> MembershipSplit:
    return MembershipSplit(train.features, train.labels, test.features, test.labels,
                           np.arange(len(train)), np.arange(len(test)))
