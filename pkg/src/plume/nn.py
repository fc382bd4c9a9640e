"""Dense layer primitives with explicit forward and backward passes.

All tensors are 64-bit numpy arrays; matrices are row-major (batch x features).
Each ``*_forward`` returns the output plus whatever cache its paired
``*_backward`` needs.  Nothing here builds a graph: composition and the order
of backward calls are the caller's responsibility.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BatchTooSmallError, CheckInvalidError, DimensionError

DEFAULT_LEAKY_SLOPE = 0.01
BN_EPSILON = 1e-5
BN_MOMENTUM = 0.1

try:  # fused elementwise kernels; numpy fallbacks below cover their absence
    from numba import njit as _njit

    @_njit(cache=True, fastmath=True)
    def _leaky_fwd_kernel(x, slope):
        out = np.empty_like(x)
        for i in range(x.shape[0]):
            v = x[i]
            out[i] = v if v > 0.0 else slope * v
        return out

    @_njit(cache=True, fastmath=True)
    def _leaky_bwd_kernel(g, x, slope):
        out = np.empty_like(g)
        for i in range(g.shape[0]):
            out[i] = g[i] if x[i] > 0.0 else slope * g[i]
        return out

    @_njit(cache=True, fastmath=True)
    def _bn_train_kernel(x, eps, running_mean, running_var, momentum):
        n, d = x.shape
        mean = np.zeros(d)
        for i in range(n):
            for j in range(d):
                mean[j] += x[i, j]
        for j in range(d):
            mean[j] /= n
        var = np.zeros(d)
        for i in range(n):
            for j in range(d):
                t = x[i, j] - mean[j]
                var[j] += t * t
        inv_std = np.empty(d)
        for j in range(d):
            var[j] /= n
            inv_std[j] = 1.0 / np.sqrt(var[j] + eps)
            running_mean[j] = (1.0 - momentum) * running_mean[j] + momentum * mean[j]
            running_var[j] = (1.0 - momentum) * running_var[j] + momentum * var[j]
        xhat = np.empty_like(x)
        for i in range(n):
            for j in range(d):
                xhat[i, j] = (x[i, j] - mean[j]) * inv_std[j]
        return inv_std, xhat

    @_njit(cache=True, fastmath=True)
    def _bn_leaky_train_kernel(x, eps, running_mean, running_var, momentum, slope):
        n, d = x.shape
        mean = np.zeros(d)
        for i in range(n):
            for j in range(d):
                mean[j] += x[i, j]
        for j in range(d):
            mean[j] /= n
        var = np.zeros(d)
        for i in range(n):
            for j in range(d):
                t = x[i, j] - mean[j]
                var[j] += t * t
        inv_std = np.empty(d)
        for j in range(d):
            var[j] /= n
            inv_std[j] = 1.0 / np.sqrt(var[j] + eps)
            running_mean[j] = (1.0 - momentum) * running_mean[j] + momentum * mean[j]
            running_var[j] = (1.0 - momentum) * running_var[j] + momentum * var[j]
        xhat = np.empty_like(x)
        out = np.empty_like(x)
        for i in range(n):
            for j in range(d):
                h = (x[i, j] - mean[j]) * inv_std[j]
                xhat[i, j] = h
                out[i, j] = h if h > 0.0 else slope * h
        return inv_std, xhat, out

    @_njit(cache=True, fastmath=True)
    def _bn_leaky_bwd_kernel(g, xhat, inv_std, slope):
        n, d = g.shape
        sum_g = np.zeros(d)
        sum_gx = np.zeros(d)
        for i in range(n):
            for j in range(d):
                gij = g[i, j] if xhat[i, j] > 0.0 else slope * g[i, j]
                sum_g[j] += gij
                sum_gx[j] += gij * xhat[i, j]
        out = np.empty_like(g)
        for i in range(n):
            for j in range(d):
                gij = g[i, j] if xhat[i, j] > 0.0 else slope * g[i, j]
                out[i, j] = (inv_std[j] / n) * (
                    n * gij - sum_g[j] - xhat[i, j] * sum_gx[j]
                )
        return out

    @_njit(cache=True, fastmath=True)
    def _bn_bwd_kernel(g, xhat, inv_std):
        n, d = g.shape
        sum_g = np.zeros(d)
        sum_gx = np.zeros(d)
        for i in range(n):
            for j in range(d):
                sum_g[j] += g[i, j]
                sum_gx[j] += g[i, j] * xhat[i, j]
        out = np.empty_like(g)
        for i in range(n):
            for j in range(d):
                out[i, j] = (inv_std[j] / n) * (
                    n * g[i, j] - sum_g[j] - xhat[i, j] * sum_gx[j]
                )
        return out

except ImportError:  # pragma: no cover
    _leaky_fwd_kernel = None
    _leaky_bwd_kernel = None
    _bn_train_kernel = None
    _bn_bwd_kernel = None
    _bn_leaky_train_kernel = None
    _bn_leaky_bwd_kernel = None


@dataclass
class Parameter:
    """A learnable tensor and its gradient slot."""

    value: np.ndarray
    grad: np.ndarray = None

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=np.float64)
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        assert self.grad.shape == self.value.shape

    def zero_grad(self):
        self.grad.fill(0.0)

    @property
    def size(self):
        return self.value.size


def init_uniform(shape, rng, fan_in):
    """Uniform init in +-sqrt(1/fan_in)."""
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def linear_forward(x, weight, bias=None):
    """out = x @ weight (+ bias per row)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise DimensionError("linear_forward", x.shape, weight.shape)
    out = x @ weight
    if bias is not None:
        if bias.shape != (weight.shape[1],):
            raise DimensionError("linear_forward bias", bias.shape, (weight.shape[1],))
        out = out + bias
    return out


def linear_backward(grad_out, x, weight, has_bias=True):
    """Returns (grad_input, grad_weight, grad_bias)."""
    if grad_out.shape != (x.shape[0], weight.shape[1]):
        raise DimensionError("linear_backward", grad_out.shape, (x.shape[0], weight.shape[1]))
    grad_input = grad_out @ weight.T
    grad_weight = x.T @ grad_out
    grad_bias = grad_out.sum(axis=0) if has_bias else None
    return grad_input, grad_weight, grad_bias


def leaky_relu(x, slope=DEFAULT_LEAKY_SLOPE):
    if _leaky_fwd_kernel is not None and x.flags.c_contiguous:
        return _leaky_fwd_kernel(x.reshape(-1), slope).reshape(x.shape)
    # max(x, slope*x) == leaky relu for 0 <= slope <= 1
    return np.maximum(x, slope * x)


def leaky_relu_backward(grad_out, x, slope=DEFAULT_LEAKY_SLOPE):
    # x == 0 takes the slope branch, matching the forward definition
    if (
        _leaky_bwd_kernel is not None
        and grad_out.flags.c_contiguous
        and x.flags.c_contiguous
    ):
        return _leaky_bwd_kernel(
            grad_out.reshape(-1), x.reshape(-1), slope
        ).reshape(grad_out.shape)
    return np.where(x > 0, grad_out, slope * grad_out)


def sigmoid(x):
    """Numerically stable logistic function, output strictly in (0, 1)."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class BatchNormState:
    """Running statistics for a non-affine batch-norm layer.

    Variance follows the biased (1/N) convention in both batch statistics and
    the running accumulator.  ``batches_tracked`` distinguishes a never-trained
    layer from one whose running stats happen to be (0, 1).
    """

    dim: int
    momentum: float = BN_MOMENTUM
    epsilon: float = BN_EPSILON
    running_mean: np.ndarray = None
    running_var: np.ndarray = None
    batches_tracked: int = 0

    def __post_init__(self):
        if self.running_mean is None:
            self.running_mean = np.zeros(self.dim)
        if self.running_var is None:
            self.running_var = np.ones(self.dim)

    def copy(self):
        return BatchNormState(
            dim=self.dim,
            momentum=self.momentum,
            epsilon=self.epsilon,
            running_mean=self.running_mean.copy(),
            running_var=self.running_var.copy(),
            batches_tracked=self.batches_tracked,
        )


def batch_norm_forward(x, state, train):
    """Normalize columns of x; returns (out, cache).

    Train mode uses batch statistics and updates the running stats in place;
    eval mode reads the running stats and never mutates them.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != state.dim:
        raise DimensionError("batch_norm_forward", x.shape, (None, state.dim))
    if train:
        n = x.shape[0]
        if n < 2:
            raise BatchTooSmallError(f"batch_norm train mode needs N >= 2, got {n}")
        if _bn_train_kernel is not None and x.flags.c_contiguous:
            inv_std, xhat = _bn_train_kernel(
                x, state.epsilon, state.running_mean, state.running_var, state.momentum
            )
        else:
            mean = x.mean(axis=0)
            var = x.var(axis=0)  # biased
            inv_std = 1.0 / np.sqrt(var + state.epsilon)
            xhat = (x - mean) * inv_std
            m = state.momentum
            state.running_mean *= 1.0 - m
            state.running_mean += m * mean
            state.running_var *= 1.0 - m
            state.running_var += m * var
        state.batches_tracked += 1
        cache = ("train", xhat, inv_std, n)
    else:
        inv_std = 1.0 / np.sqrt(state.running_var + state.epsilon)
        xhat = (x - state.running_mean) * inv_std
        cache = ("eval", None, inv_std, x.shape[0])
    return xhat, cache


def batch_norm_backward(grad_out, cache):
    mode, xhat, inv_std, n = cache
    if mode == "eval":
        return grad_out * inv_std
    if (
        _bn_bwd_kernel is not None
        and grad_out.flags.c_contiguous
        and xhat.flags.c_contiguous
    ):
        return _bn_bwd_kernel(grad_out, xhat, inv_std)
    sum_g = grad_out.sum(axis=0)
    sum_gx = (grad_out * xhat).sum(axis=0)
    return (inv_std / n) * (n * grad_out - sum_g - xhat * sum_gx)


def batch_norm_leaky_forward(x, state, train, slope=DEFAULT_LEAKY_SLOPE):
    """batch_norm_forward followed by leaky_relu in one pass.

    Returns (out, cache); the cache is the batch-norm cache, whose normalized
    activations double as the LeakyReLU sign input for the fused backward.
    """
    if (
        train
        and _bn_leaky_train_kernel is not None
        and x.flags.c_contiguous
        and x.ndim == 2
        and x.shape[1] == state.dim
        and x.shape[0] >= 2
    ):
        inv_std, xhat, out = _bn_leaky_train_kernel(
            x, state.epsilon, state.running_mean, state.running_var,
            state.momentum, slope,
        )
        state.batches_tracked += 1
        return out, ("train", xhat, inv_std, x.shape[0])
    xhat, cache = batch_norm_forward(x, state, train)
    if not train:
        # keep the normalized activations for the LeakyReLU sign in backward
        cache = ("eval", xhat, cache[2], cache[3])
    return leaky_relu(xhat, slope), cache


def batch_norm_leaky_backward(grad_out, cache, slope=DEFAULT_LEAKY_SLOPE):
    """Backward of the fused batch-norm + LeakyReLU pair."""
    mode, xhat, inv_std, n = cache
    if (
        mode == "train"
        and _bn_leaky_bwd_kernel is not None
        and grad_out.flags.c_contiguous
        and xhat.flags.c_contiguous
    ):
        return _bn_leaky_bwd_kernel(grad_out, xhat, inv_std, slope)
    grad_xhat = leaky_relu_backward(grad_out, xhat, slope)
    return batch_norm_backward(grad_xhat, (mode, xhat, inv_std, n))


def grad_check(loss_and_grad, params, h=1e-5, tol=1e-4):
    """Compare analytic gradients against central finite differences.

    ``loss_and_grad()`` must zero, then fill, the ``grad`` slot of every
    Parameter in ``params`` (a name -> Parameter mapping) and return the scalar
    loss.  It must be deterministic: any RNG involved has to be frozen.

    Returns a report dict: {name: max_rel_error}, plus "passed".
    """
    loss_a = loss_and_grad()
    analytic = {name: p.grad.copy() for name, p in params.items()}
    loss_b = loss_and_grad()
    if loss_a != loss_b:
        raise CheckInvalidError(
            f"closure is not deterministic: {loss_a!r} != {loss_b!r}"
        )

    report = {}
    worst = 0.0
    for name, p in params.items():
        flat = p.value.ravel()
        max_rel = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = loss_and_grad()
            flat[i] = orig - h
            lm = loss_and_grad()
            flat[i] = orig
            numeric = (lp - lm) / (2.0 * h)
            a = analytic[name].ravel()[i]
            denom = max(abs(a), abs(numeric), 1e-6)
            max_rel = max(max_rel, abs(a - numeric) / denom)
        report[name] = max_rel
        worst = max(worst, max_rel)
        p.grad[...] = analytic[name]
    report["passed"] = worst <= tol
    report["max_rel_error"] = worst
    return report
