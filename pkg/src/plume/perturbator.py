"""VAE noise generator and the pseudo-anomaly perturbation strategies.

The generator maps a batch of feature vectors to per-sample (alpha, beta)
pairs through an encoder (two heads sharing one hidden layer), the
reparameterization trick, and a two-layer decoder.  Five perturbation
strategies consume (alpha, beta): the rank-1 linear map, element-wise
add/mult variants, and a non-adaptive Gaussian baseline that needs no
generator at all.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import nn
from .nn import Parameter, leaky_relu, leaky_relu_backward, linear_backward, linear_forward


class Strategy(str, Enum):
    LINEAR_MAP = "LinearMap"
    ADD_MULT = "AddMult"
    ADD = "Add"
    MULT = "Mult"
    GAUSSIAN = "Gaussian"


#: strategies whose (alpha, beta) come from the trained generator
ADAPTIVE_STRATEGIES = (
    Strategy.LINEAR_MAP,
    Strategy.ADD_MULT,
    Strategy.ADD,
    Strategy.MULT,
)


def decoder_output_dim(strategy, dim):
    """Add and Mult need a single D-vector; the others need both."""
    if strategy in (Strategy.ADD, Strategy.MULT):
        return dim
    return 2 * dim


@dataclass
class PerturbatorParams:
    """Learnable tensors of the generator network.

    Layer sizes are D->D throughout except the final decoder layer, whose
    output is 2D (or D for the single-vector strategies).  All layers carry a
    bias.
    """

    w1: Parameter
    b1: Parameter
    w_mu: Parameter
    b_mu: Parameter
    w_logvar: Parameter
    b_logvar: Parameter
    w_dec1: Parameter
    b_dec1: Parameter
    w_dec2: Parameter
    b_dec2: Parameter

    @classmethod
    def init(cls, dim, rng, strategy=Strategy.LINEAR_MAP):
        out_dim = decoder_output_dim(strategy, dim)

        def lin(n_in, n_out):
            w = Parameter(nn.init_uniform((n_in, n_out), rng, n_in))
            b = Parameter(nn.init_uniform((n_out,), rng, n_in))
            return w, b

        w1, b1 = lin(dim, dim)
        w_mu, b_mu = lin(dim, dim)
        w_lv, b_lv = lin(dim, dim)
        w_d1, b_d1 = lin(dim, dim)
        w_d2, b_d2 = lin(dim, out_dim)
        return cls(w1, b1, w_mu, b_mu, w_lv, b_lv, w_d1, b_d1, w_d2, b_d2)

    def named(self):
        return {
            "pert.w1": self.w1,
            "pert.b1": self.b1,
            "pert.w_mu": self.w_mu,
            "pert.b_mu": self.b_mu,
            "pert.w_logvar": self.w_logvar,
            "pert.b_logvar": self.b_logvar,
            "pert.w_dec1": self.w_dec1,
            "pert.b_dec1": self.b_dec1,
            "pert.w_dec2": self.w_dec2,
            "pert.b_dec2": self.b_dec2,
        }

    def param_count(self):
        return sum(p.size for p in self.named().values())

    def zero_grad(self):
        for p in self.named().values():
            p.zero_grad()


def encode(x, params):
    """Returns (mu, logvar, cache) for a batch x of shape N x D.

    Both heads read the same hidden activation.  The second head emits the
    log-variance so the standard deviation stays positive by construction.
    """
    a1 = linear_forward(x, params.w1.value, params.b1.value)
    h = leaky_relu(a1)
    mu = linear_forward(h, params.w_mu.value, params.b_mu.value)
    logvar = linear_forward(h, params.w_logvar.value, params.b_logvar.value)
    cache = (x, a1, h)
    return mu, logvar, cache


def encode_backward(grad_mu, grad_logvar, cache, params):
    """Writes encoder gradients; returns grad wrt the input batch."""
    x, a1, h = cache
    gh_mu, gw_mu, gb_mu = linear_backward(grad_mu, h, params.w_mu.value)
    gh_lv, gw_lv, gb_lv = linear_backward(grad_logvar, h, params.w_logvar.value)
    params.w_mu.grad = gw_mu
    params.b_mu.grad = gb_mu
    params.w_logvar.grad = gw_lv
    params.b_logvar.grad = gb_lv
    ga1 = leaky_relu_backward(gh_mu + gh_lv, a1)
    gx, gw1, gb1 = linear_backward(ga1, x, params.w1.value)
    params.w1.grad = gw1
    params.b1.grad = gb1
    return gx


def reparameterize(mu, logvar, rng):
    """z = mu + exp(logvar/2) * eps with eps ~ N(0, I); eps is returned so the
    draw can be replayed and differentiated through."""
    eps = rng.standard_normal(mu.shape)
    sigma = np.exp(0.5 * logvar)
    z = mu + sigma * eps
    return z, eps


def reparameterize_backward(grad_z, logvar, eps):
    """Returns (grad_mu, grad_logvar) with eps frozen."""
    grad_mu = grad_z
    grad_logvar = 0.5 * grad_z * eps * np.exp(0.5 * logvar)
    return grad_mu, grad_logvar


def decode(z, params, strategy=Strategy.LINEAR_MAP):
    """Maps latent batch z to (alpha, beta, cache).

    For Add, alpha is None (identity multiplicative part); for Mult, beta is
    None.  Otherwise the 2D-dim output splits into [alpha | beta].
    """
    a1 = linear_forward(z, params.w_dec1.value, params.b_dec1.value)
    h = leaky_relu(a1)
    out = linear_forward(h, params.w_dec2.value, params.b_dec2.value)
    dim = z.shape[1]
    if strategy == Strategy.ADD:
        alpha, beta = None, out
    elif strategy == Strategy.MULT:
        alpha, beta = out, None
    else:
        alpha, beta = out[:, :dim], out[:, dim:]
    cache = (z, a1, h)
    return alpha, beta, cache


def decode_backward(grad_alpha, grad_beta, cache, params, strategy=Strategy.LINEAR_MAP):
    """Writes decoder gradients; returns grad wrt z."""
    z, a1, h = cache
    if strategy == Strategy.ADD:
        grad_out = grad_beta
    elif strategy == Strategy.MULT:
        grad_out = grad_alpha
    else:
        grad_out = np.concatenate([grad_alpha, grad_beta], axis=1)
    gh, gw2, gb2 = linear_backward(grad_out, h, params.w_dec2.value)
    params.w_dec2.grad = gw2
    params.b_dec2.grad = gb2
    ga1 = leaky_relu_backward(gh, a1)
    gz, gw1, gb1 = linear_backward(ga1, z, params.w_dec1.value)
    params.w_dec1.grad = gw1
    params.b_dec1.grad = gb1
    return gz


# --- perturbation maps (row-wise over N x D batches) ---


def perturb_linear(x, alpha, beta):
    """x_tilde = (I + alpha beta^T) x, computed without the D x D matrix."""
    dots = np.sum(beta * x, axis=-1, keepdims=True)  # beta^T x per row
    return x + alpha * dots


def perturb_linear_backward(grad_out, x, alpha, beta):
    """Returns (grad_x, grad_alpha, grad_beta)."""
    bx = np.sum(beta * x, axis=-1, keepdims=True)
    ag = np.sum(alpha * grad_out, axis=-1, keepdims=True)
    grad_x = grad_out + beta * ag
    grad_alpha = grad_out * bx
    grad_beta = x * ag
    return grad_x, grad_alpha, grad_beta


def perturb_addmult(x, alpha, beta):
    return alpha * x + beta


def perturb_addmult_backward(grad_out, x, alpha, beta):
    return grad_out * alpha, grad_out * x, grad_out


def perturb_add(x, beta):
    return x + beta


def perturb_add_backward(grad_out, x, beta):
    return grad_out, grad_out


def perturb_mult(x, alpha):
    return alpha * x


def perturb_mult_backward(grad_out, x, alpha):
    return grad_out * alpha, grad_out * x


def perturb_gaussian(x, sigma, rng):
    """Non-adaptive baseline: x + sigma * n with n ~ N(0, I)."""
    if sigma <= 0:
        raise ValueError(f"gaussian sigma must be > 0, got {sigma}")
    return x + sigma * rng.standard_normal(x.shape)


def apply_strategy(strategy, x, alpha, beta):
    """Generate pseudo-anomalies, keeping the noise roles of (alpha, beta)
    uniform across strategies: alpha is the multiplicative component (drawn
    toward 1 by the noise constraint) and beta the additive one (drawn toward
    0).  The rank-1 map therefore couples alpha to x through the inner
    product and uses beta as the added direction, x + beta (alpha^T x), so
    the perturbation decays to the identity as beta vanishes while its
    direction stays free to adapt.
    """
    if strategy == Strategy.LINEAR_MAP:
        return perturb_linear(x, beta, alpha)
    if strategy == Strategy.ADD_MULT:
        return perturb_addmult(x, alpha, beta)
    if strategy == Strategy.ADD:
        return perturb_add(x, beta)
    if strategy == Strategy.MULT:
        return perturb_mult(x, alpha)
    raise ValueError(f"strategy {strategy} has no adaptive perturbation")


def apply_strategy_backward(strategy, grad_out, x, alpha, beta):
    """Returns (grad_x, grad_alpha, grad_beta); None where not applicable."""
    if strategy == Strategy.LINEAR_MAP:
        gx, gb, ga = perturb_linear_backward(grad_out, x, beta, alpha)
        return gx, ga, gb
    if strategy == Strategy.ADD_MULT:
        return perturb_addmult_backward(grad_out, x, alpha, beta)
    if strategy == Strategy.ADD:
        gx, gb = perturb_add_backward(grad_out, x, beta)
        return gx, None, gb
    if strategy == Strategy.MULT:
        gx, ga = perturb_mult_backward(grad_out, x, alpha)
        return gx, ga, None
    raise ValueError(f"strategy {strategy} has no adaptive perturbation")


def identity_alpha_beta(strategy, shape):
    """The (alpha, beta) at which each adaptive strategy is the identity map."""
    ones = np.ones(shape)
    zeros = np.zeros(shape)
    if strategy == Strategy.LINEAR_MAP:
        # beta = 0 makes the rank-1 term vanish; (1, 0) is the loss optimum
        return ones, zeros
    if strategy == Strategy.ADD_MULT:
        return ones, zeros
    if strategy == Strategy.ADD:
        return None, zeros
    if strategy == Strategy.MULT:
        return ones, None
    raise ValueError(f"strategy {strategy} has no adaptive identity")


# --- generator-side losses ---


def noise_constraint_loss(alpha, beta):
    """Per-sample ||alpha - 1||^2 + ||beta||^2, summed over D.

    Accepts N x D batches (returns an N-vector) or single D-vectors (returns a
    scalar).  A missing alpha/beta contributes its counterpart term only.
    """
    total = 0.0
    if alpha is not None:
        total = total + np.sum((alpha - 1.0) ** 2, axis=-1)
    if beta is not None:
        total = total + np.sum(beta**2, axis=-1)
    return total


def noise_constraint_grad(alpha, beta):
    """Gradients of the summed-over-samples loss: (2(alpha-1), 2 beta)."""
    ga = None if alpha is None else 2.0 * (alpha - 1.0)
    gb = None if beta is None else 2.0 * beta
    return ga, gb


def kl_divergence(mu, logvar):
    """Per-sample KL(N(mu, diag(exp(logvar))) || N(0, I)), summed over D."""
    var = np.exp(logvar)
    return 0.5 * np.sum(var + mu**2 - 1.0 - logvar, axis=-1)


def kl_divergence_grad(mu, logvar):
    """Gradients of the summed-over-samples KL: (mu, (exp(logvar) - 1) / 2)."""
    return mu.copy(), 0.5 * (np.exp(logvar) - 1.0)
