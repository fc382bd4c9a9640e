"""Feature-file I/O, one-class splits, batching, and synthetic blobs.

The PLMF binary format carries a matrix of feature rows plus per-row class
labels:

    magic   "PLMF" (4 bytes)
    version u32 LE (currently 1)
    count   u64 LE
    dim     u32 LE
    dtype   u8 (0 = f32, 1 = f64)
    lwidth  u8 (bytes per label; 4 = signed 32-bit, the only width written)
    payload count x dim little-endian floats, row-major
    footer  count labels, signed 32-bit LE

f32 payloads are widened to f64 on load; training math is all 64-bit.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadMagicError,
    NoDataError,
    TruncatedPayloadError,
    VersionMismatchError,
)

MAGIC = b"PLMF"
VERSION = 1
_DTYPE_FLAGS = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_HEADER = struct.Struct("<4sIQIBB")


@dataclass
class FeatureDataset:
    """In-memory feature matrix with per-row class labels."""

    features: np.ndarray  # n x dim, float64
    labels: np.ndarray  # n, int32

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValueError("features must be 2-D")
        self.labels = np.asarray(self.labels, dtype=np.int32)
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("labels length must match feature rows")

    @property
    def count(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]


def write_features(path, dataset, dtype="f64"):
    """Serialize a FeatureDataset to PLMF; round trip is lossless per dtype."""
    flag = 1 if dtype == "f64" else 0
    payload_dtype = _DTYPE_FLAGS[flag]
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(MAGIC, VERSION, dataset.count, dataset.dim, flag, 4)
        )
        fh.write(np.ascontiguousarray(dataset.features, dtype=payload_dtype).tobytes())
        fh.write(np.ascontiguousarray(dataset.labels, dtype="<i4").tobytes())


def read_features(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise TruncatedPayloadError(f"{path}: file shorter than header")
    magic, version, count, dim, dtype_flag, lwidth = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise VersionMismatchError(f"{path}: version {version}, expected {VERSION}")
    if dtype_flag not in _DTYPE_FLAGS or lwidth != 4:
        raise TruncatedPayloadError(
            f"{path}: unknown dtype flag {dtype_flag} / label width {lwidth}"
        )
    payload_dtype = _DTYPE_FLAGS[dtype_flag]
    offset = _HEADER.size
    payload_bytes = count * dim * payload_dtype.itemsize
    label_bytes = count * 4
    if len(raw) != offset + payload_bytes + label_bytes:
        raise TruncatedPayloadError(
            f"{path}: expected {offset + payload_bytes + label_bytes} bytes, "
            f"got {len(raw)}"
        )
    features = np.frombuffer(raw, dtype=payload_dtype, count=count * dim, offset=offset)
    features = features.reshape(count, dim).astype(np.float64)
    labels = np.frombuffer(raw, dtype="<i4", count=count, offset=offset + payload_bytes)
    return FeatureDataset(features=features.copy(), labels=labels.astype(np.int32))


def read_csv_features(path, label_column=-1):
    """Rectangular numeric CSV with an optional header row.

    ``label_column`` is an index (or header name when a header is present).
    """
    rows = []
    header = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row:
                continue
            if lineno == 1:
                try:
                    [float(c) for c in row]
                except ValueError:
                    header = row
                    continue
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-numeric cell ({exc})")
            if len(rows) > 1 and len(rows[-1]) != len(rows[0]):
                raise ValueError(
                    f"{path}:{lineno}: ragged row, {len(rows[-1])} cells "
                    f"vs {len(rows[0])}"
                )
    if not rows:
        raise NoDataError(f"{path}: empty CSV")
    if isinstance(label_column, str):
        if header is None or label_column not in header:
            raise ValueError(f"{path}: label column {label_column!r} not found")
        label_column = header.index(label_column)
    matrix = np.asarray(rows, dtype=np.float64)
    labels = matrix[:, label_column].astype(np.int32)
    features = np.delete(matrix, label_column % matrix.shape[1], axis=1)
    return FeatureDataset(features=features, labels=labels)


@dataclass
class OneClassSplit:
    """Training partition (normals only) and a relabeled validation partition."""

    train_features: np.ndarray
    val_features: np.ndarray
    val_is_normal: np.ndarray
    normal_classes: frozenset

    def __post_init__(self):
        self.val_is_normal = np.asarray(self.val_is_normal, dtype=bool)


def one_class_split(train_ds, val_ds, normal_classes):
    """Build the one-class protocol: keep only normal-class rows for training,
    relabel every validation row as normal/anomalous.

    ``normal_classes`` may be a single label or an iterable of labels (several
    source classes can jointly form the normal class).
    """
    if np.isscalar(normal_classes):
        normal_classes = {int(normal_classes)}
    normal_classes = frozenset(int(c) for c in normal_classes)
    train_mask = np.isin(train_ds.labels, list(normal_classes))
    if not train_mask.any():
        raise NoDataError(f"no training rows with class in {sorted(normal_classes)}")
    val_is_normal = np.isin(val_ds.labels, list(normal_classes))
    if val_ds.count == 0:
        raise NoDataError("validation set is empty")
    return OneClassSplit(
        train_features=train_ds.features[train_mask],
        val_features=val_ds.features,
        val_is_normal=val_is_normal,
        normal_classes=normal_classes,
    )


@dataclass
class CovarianceSpec:
    """Diagonal Gaussian shape: isotropic, or anisotropic with per-dimension
    standard deviations drawn log-uniform in [scale/aniso, scale*aniso]."""

    scale: float = 1.0
    anisotropy: float = 1.0

    def stds(self, dim, rng):
        if self.anisotropy == 1.0:
            return np.full(dim, self.scale)
        log_a = np.log(self.anisotropy)
        return self.scale * np.exp(rng.uniform(-log_a, log_a, size=dim))


def synth_blobs(
    dim,
    n_normal,
    n_anomaly,
    separation,
    seed,
    cov_normal=None,
    cov_anomaly=None,
):
    """Two diagonal-Gaussian blobs: normals at the origin, anomalies shifted
    by ``separation`` along a random unit direction.  Labels: 0 = normal,
    1 = anomaly."""
    if separation < 0:
        raise ValueError("separation must be >= 0")
    cov_normal = cov_normal or CovarianceSpec()
    cov_anomaly = cov_anomaly or CovarianceSpec()
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(dim)
    u /= np.linalg.norm(u)
    normal = rng.standard_normal((n_normal, dim)) * cov_normal.stds(dim, rng)
    anomaly = (
        rng.standard_normal((n_anomaly, dim)) * cov_anomaly.stds(dim, rng)
        + separation * u
    )
    features = np.vstack([normal, anomaly])
    labels = np.concatenate([np.zeros(n_normal, np.int32), np.ones(n_anomaly, np.int32)])
    return FeatureDataset(features=features, labels=labels)


def batch_iterator(features, batch_size, rng=None):
    """Yield row-index arrays covering one epoch.

    The permutation is drawn from ``rng`` (insertion order when None); a short
    final batch is dropped because train-mode batch-norm and the contrastive
    prefactor degrade at tiny N.
    """
    n = features.shape[0]
    if batch_size < 2:
        raise ValueError("batch_size must be >= 2")
    if n < batch_size:
        raise NoDataError(f"dataset of {n} rows is smaller than one batch ({batch_size})")
    order = np.arange(n) if rng is None else rng.permutation(n)
    for start in range(0, n - batch_size + 1, batch_size):
        yield order[start : start + batch_size]
