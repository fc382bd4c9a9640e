"""Discriminator MLP: three biasless linear layers with non-affine batch-norms.

The network splits into an embedding stage (through the second LeakyReLU) and
a single-layer boundary estimator; the contrastive loss reads the embedding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import ModelNotTrainedError
from .nn import (
    BatchNormState,
    Parameter,
    batch_norm_leaky_backward,
    batch_norm_leaky_forward,
    linear_backward,
    linear_forward,
    sigmoid,
)


@dataclass
class ClassifierParams:
    """Weights and batch-norm states of the discriminator."""

    lin1: Parameter
    bn1: BatchNormState
    lin2: Parameter
    bn2: BatchNormState
    lin3: Parameter

    @classmethod
    def init(cls, dim, rng, hidden1=1024, hidden2=512):
        return cls(
            lin1=Parameter(nn.init_uniform((dim, hidden1), rng, dim)),
            bn1=BatchNormState(hidden1),
            lin2=Parameter(nn.init_uniform((hidden1, hidden2), rng, hidden1)),
            bn2=BatchNormState(hidden2),
            lin3=Parameter(nn.init_uniform((hidden2, 1), rng, hidden2)),
        )

    def named(self):
        return {"clf.lin1": self.lin1, "clf.lin2": self.lin2, "clf.lin3": self.lin3}

    def param_count(self):
        return sum(p.size for p in self.named().values())

    def zero_grad(self):
        for p in self.named().values():
            p.zero_grad()

    @property
    def dim(self):
        return self.lin1.value.shape[0]

    @property
    def embedding_dim(self):
        return self.lin2.value.shape[1]


def embed(x, params, train):
    """Embedding stage f1 on a raw feature batch.

    Returns (z, cache).  Train mode requires N >= 2 for the batch-norms.
    """
    a1 = linear_forward(x, params.lin1.value)
    r1, bn1_cache = batch_norm_leaky_forward(a1, params.bn1, train)
    a2 = linear_forward(r1, params.lin2.value)
    z, bn2_cache = batch_norm_leaky_forward(a2, params.bn2, train)
    cache = (x, bn1_cache, r1, bn2_cache)
    return z, cache


def embed_backward(grad_z, cache, params):
    """Writes lin1/lin2 gradients; returns grad wrt the input batch."""
    x, bn1_cache, r1, bn2_cache = cache
    ga2 = batch_norm_leaky_backward(grad_z, bn2_cache)
    gr1, gw2, _ = linear_backward(ga2, r1, params.lin2.value, has_bias=False)
    params.lin2.grad = gw2
    ga1 = batch_norm_leaky_backward(gr1, bn1_cache)
    gx, gw1, _ = linear_backward(ga1, x, params.lin1.value, has_bias=False)
    params.lin1.grad = gw1
    return gx


def decide(z, params):
    """Boundary estimator f2: sigmoid(lin3(z)); near 1 means normal."""
    logits = linear_forward(z, params.lin3.value)
    return sigmoid(logits)


def decide_backward(grad_logits, z, params):
    """Backward through lin3 given the gradient wrt the logits."""
    gz, gw3, _ = linear_backward(grad_logits, z, params.lin3.value, has_bias=False)
    params.lin3.grad = gw3
    return gz


def forward_train(x, params):
    """Full train-mode forward on a feature batch.

    Returns (y_hat (N,), z, logits, caches) where caches feed backward_train.
    """
    z, embed_cache = embed(x, params, train=True)
    logits = linear_forward(z, params.lin3.value)
    y_hat = sigmoid(logits)
    return y_hat[:, 0], z, logits[:, 0], (embed_cache, z)


def backward_train(grad_logits, grad_z_extra, caches, params):
    """Backward from logit gradients (N,) plus any direct embedding gradient
    (e.g. the contrastive term); returns grad wrt the input batch."""
    embed_cache, z = caches
    gz = decide_backward(grad_logits[:, None], z, params)
    if grad_z_extra is not None:
        gz = gz + grad_z_extra
    return embed_backward(gz, embed_cache, params)


def score_batch(x, params):
    """Eval-mode anomaly ranking scores (higher = more normal) for raw rows."""
    if params.bn1.batches_tracked == 0:
        raise ModelNotTrainedError(
            "batch-norm running statistics are uninitialized; train the model first"
        )
    z, _ = embed(x, params, train=False)
    return decide(z, params)[:, 0]


def anomaly_score(x, params):
    """User-facing anomaly-ness: 1 - y_hat."""
    return 1.0 - score_batch(x, params)
