"""AdamW with decoupled weight decay and the triangular cyclical LR policy."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamWConfig:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01


@dataclass
class ClrConfig:
    base_lr: float = 1e-4
    max_lr: float = 1e-3
    step_size_iters: int = 100  # half-cycle length; trainer sets 2 epochs of batches


def _adamw_update_numpy(p, g, m, v, beta1, beta2, eps, wd, lr, bc1, bc2):
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    if wd:
        p *= 1.0 - lr * wd
    p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


try:  # single fused pass; the pure-numpy fallback is ~2x more memory traffic
    from numba import njit

    @njit(cache=True, fastmath=True)
    def _adamw_update(p, g, m, v, beta1, beta2, eps, wd, lr, bc1, bc2):
        n = p.shape[0]
        decay = 1.0 - lr * wd
        scale = lr / bc1
        inv_sqrt_bc2 = 1.0 / np.sqrt(bc2)
        for i in range(n):
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i]
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]
        # the array expression compiles to a SIMD sqrt/divide, which the
        # scalar loop above does not
        t = m / (np.sqrt(v) * inv_sqrt_bc2 + eps)
        for i in range(n):
            p[i] = p[i] * decay - scale * t[i]

except ImportError:  # pragma: no cover
    _adamw_update = _adamw_update_numpy


def clr_lr_at(iteration, clr):
    """Triangular wave between base_lr and max_lr, half-period step_size_iters."""
    if iteration < 0:
        raise ValueError("iteration must be >= 0")
    cycle = np.floor(1 + iteration / (2 * clr.step_size_iters))
    x = abs(iteration / clr.step_size_iters - 2 * cycle + 1)
    return clr.base_lr + (clr.max_lr - clr.base_lr) * max(0.0, 1.0 - x)


class AdamW:
    """Per-parameter moment accumulators; decay is applied directly to the
    weights, never through the moments."""

    def __init__(self, params, config=None):
        self.params = dict(params)
        self.config = config or AdamWConfig()
        self.step_count = 0
        self.m = {k: np.zeros_like(p.value) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.value) for k, p in self.params.items()}

    def step(self, lr):
        c = self.config
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - c.beta1**t
        bc2 = 1.0 - c.beta2**t
        for name, p in self.params.items():
            _adamw_update(
                p.value.reshape(-1),
                p.grad.reshape(-1),
                self.m[name].reshape(-1),
                self.v[name].reshape(-1),
                c.beta1,
                c.beta2,
                c.eps,
                c.weight_decay,
                lr,
                bc1,
                bc2,
            )

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()
