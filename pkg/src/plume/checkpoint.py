"""PLMC model checkpoint format.

Layout:

    magic   "PLMC" (4 bytes)
    version u32 LE (currently 1)
    meta    u32 length + UTF-8 JSON (TrainConfig snapshot, score convention,
            section flags)
    classifier section (always): lin1, bn1, lin2, bn2, lin3
    perturbator section (training checkpoints only): the ten generator tensors

Every tensor is written as u8 ndim, u64 dims, then little-endian f64 payload;
batch-norm states additionally carry momentum, epsilon, and the tracked-batch
counter.  The byte stream is fully determined by the model, so identical runs
produce identical files.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .classifier import ClassifierParams
from .config import TrainConfig
from .errors import (
    BadMagicError,
    FormatError,
    TruncatedPayloadError,
    VersionMismatchError,
)
from .nn import BatchNormState, Parameter
from .perturbator import PerturbatorParams
from .training import PlumeModel

MAGIC = b"PLMC"
VERSION = 1
SCORE_CONVENTION = "higher-score-is-more-normal"


def _write_tensor(fh, array):
    array = np.ascontiguousarray(array, dtype="<f8")
    fh.write(struct.pack("<B", array.ndim))
    for d in array.shape:
        fh.write(struct.pack("<Q", d))
    fh.write(array.tobytes())


def _write_bn(fh, state):
    fh.write(struct.pack("<ddQ", state.momentum, state.epsilon, state.batches_tracked))
    _write_tensor(fh, state.running_mean)
    _write_tensor(fh, state.running_var)


class _Reader:
    def __init__(self, raw, path):
        self.raw = raw
        self.path = path
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.raw):
            raise TruncatedPayloadError(f"{self.path}: truncated checkpoint")
        chunk = self.raw[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def tensor(self):
        (ndim,) = self.unpack("<B")
        shape = tuple(self.unpack("<" + "Q" * ndim))
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(self.take(count * 8), dtype="<f8")
        return data.reshape(shape).astype(np.float64)

    def bn(self):
        momentum, epsilon, tracked = self.unpack("<ddQ")
        mean = self.tensor()
        var = self.tensor()
        return BatchNormState(
            dim=mean.shape[0],
            momentum=momentum,
            epsilon=epsilon,
            running_mean=mean,
            running_var=var,
            batches_tracked=int(tracked),
        )


def save_checkpoint(path, model, cfg, include_perturbator=False):
    """Write model + config to a PLMC file.  The perturbator section is only
    emitted for training checkpoints; inference artifacts carry just the
    classifier."""
    has_pert = include_perturbator and model.perturbator is not None
    meta = {
        "config": cfg.to_dict(),
        "score_convention": SCORE_CONVENTION,
        "has_perturbator": has_pert,
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    clf = model.classifier
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        _write_tensor(fh, clf.lin1.value)
        _write_bn(fh, clf.bn1)
        _write_tensor(fh, clf.lin2.value)
        _write_bn(fh, clf.bn2)
        _write_tensor(fh, clf.lin3.value)
        if has_pert:
            for p in model.perturbator.named().values():
                _write_tensor(fh, p.value)


def load_checkpoint(path):
    """Returns (model, cfg, meta)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    r = _Reader(raw, path)
    if r.take(4) != MAGIC:
        raise BadMagicError(f"{path}: not a PLMC checkpoint")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise VersionMismatchError(f"{path}: version {version}, expected {VERSION}")
    (blob_len,) = r.unpack("<I")
    try:
        meta = json.loads(r.take(blob_len).decode("utf-8"))
    except ValueError as exc:
        raise FormatError(f"{path}: bad metadata block ({exc})")
    cfg = TrainConfig.from_dict(meta["config"])
    clf = ClassifierParams(
        lin1=Parameter(r.tensor()),
        bn1=r.bn(),
        lin2=Parameter(r.tensor()),
        bn2=r.bn(),
        lin3=Parameter(r.tensor()),
    )
    pert = None
    if meta.get("has_perturbator"):
        tensors = [r.tensor() for _ in range(10)]
        pert = PerturbatorParams(*[Parameter(t) for t in tensors])
    if r.pos != len(raw):
        raise TruncatedPayloadError(f"{path}: {len(raw) - r.pos} trailing bytes")
    return PlumeModel(classifier=clf, perturbator=pert), cfg, meta
