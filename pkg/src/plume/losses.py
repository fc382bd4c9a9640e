"""Loss terms and their analytic gradients.

Per-sample generator losses (noise constraint, KL) live next to the generator
in :mod:`plume.perturbator`; this module owns the classification and
contrastive objectives and the weighted combination of all four.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BatchTooSmallError, DegenerateEmbeddingError
from .perturbator import Strategy, kl_divergence, noise_constraint_loss

LOG_CLAMP = 1e-12

try:  # fused kernel for the fully contrastive term; numpy fallback below
    from numba import njit as _njit

    @_njit(cache=True, fastmath=True)
    def _contrastive_full_kernel(z_normal, z_pseudo, tau):
        n, e = z_normal.shape
        u = np.empty((n, e))
        v = np.empty((n, e))
        u_norms = np.empty(n)
        v_norms = np.empty(n)
        min_norm = np.inf
        for i in range(n):
            su = 0.0
            sv = 0.0
            for j in range(e):
                su += z_normal[i, j] * z_normal[i, j]
                sv += z_pseudo[i, j] * z_pseudo[i, j]
            u_norms[i] = np.sqrt(su)
            v_norms[i] = np.sqrt(sv)
            min_norm = min(min_norm, min(u_norms[i], v_norms[i]))
        if min_norm == 0.0:
            return -1.0, u, v  # sentinel: caller raises
        for i in range(n):
            iu = 1.0 / u_norms[i]
            iv = 1.0 / v_norms[i]
            for j in range(e):
                u[i, j] = z_normal[i, j] * iu
                v[i, j] = z_pseudo[i, j] * iv
        e_zz = np.exp((u @ u.T) / tau)
        for i in range(n):
            e_zz[i, i] = 0.0  # j != i, l != i for the normal-normal terms
        e_zt = np.exp((u @ v.T) / tau)
        num = np.empty(n)
        den = np.empty(n)
        value = 0.0
        for i in range(n):
            s_zz = 0.0
            s_zt = 0.0
            for j in range(n):
                s_zz += e_zz[i, j]
                s_zt += e_zt[i, j]
            num[i] = s_zz
            den[i] = s_zt + s_zz
            value += np.log(den[i]) - np.log(num[i])
        value /= n
        g_zz = np.empty((n, n))
        g_zt = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                g_zz[i, j] = (e_zz[i, j] / den[i] - e_zz[i, j] / num[i]) / n
                g_zt[i, j] = e_zt[i, j] / den[i] / n
        du = (g_zz @ u + g_zz.T @ u + g_zt @ v) / tau
        dv = (g_zt.T @ u) / tau
        # project out the radial component and undo the normalization
        grad_zn = np.empty((n, e))
        grad_zp = np.empty((n, e))
        for i in range(n):
            ru = 0.0
            rv = 0.0
            for j in range(e):
                ru += u[i, j] * du[i, j]
                rv += v[i, j] * dv[i, j]
            iu = 1.0 / u_norms[i]
            iv = 1.0 / v_norms[i]
            for j in range(e):
                grad_zn[i, j] = (du[i, j] - u[i, j] * ru) * iu
                grad_zp[i, j] = (dv[i, j] - v[i, j] * rv) * iv
        return value, grad_zn, grad_zp

except ImportError:  # pragma: no cover
    _contrastive_full_kernel = None

GUIDANCE_NONE = "none"
GUIDANCE_MEAN = "mean"
GUIDANCE_FULL = "full"
GUIDANCE_MODES = (GUIDANCE_NONE, GUIDANCE_MEAN, GUIDANCE_FULL)


@dataclass
class LossBreakdown:
    ce: float
    noise: float
    kl: float
    contrastive: float
    total: float

    def as_dict(self):
        return {
            "loss_ce": self.ce,
            "loss_n": self.noise,
            "loss_kl": self.kl,
            "loss_c": self.contrastive,
            "loss_total": self.total,
        }


def bce(y_hat, y):
    """Binary cross-entropy; y_hat clamped to [eps, 1-eps] before the logs."""
    y_hat = np.clip(np.asarray(y_hat, dtype=np.float64), LOG_CLAMP, 1.0 - LOG_CLAMP)
    y = np.asarray(y, dtype=np.float64)
    return -(y * np.log(y_hat) + (1.0 - y) * np.log(1.0 - y_hat))


def bce_logit_grad(y_hat, y):
    """Gradient of the mean BCE wrt the pre-sigmoid logits: (y_hat - y) / n."""
    n = np.asarray(y_hat).size
    return (y_hat - y) / n


def _normalize_rows(m, what):
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise DegenerateEmbeddingError(f"{what}: zero-norm embedding")
    return m / norms, norms


def cosine_similarity(v1, v2, tau):
    """Temperature-scaled cosine similarity of two vectors."""
    if tau <= 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    n1 = np.linalg.norm(v1)
    n2 = np.linalg.norm(v2)
    if n1 == 0.0 or n2 == 0.0:
        raise DegenerateEmbeddingError("cosine_similarity: zero-norm vector")
    return float(np.dot(v1, v2) / (n1 * n2 * tau))


def contrastive_full(z_normal, z_pseudo, tau):
    """Batch-mean of the fully contrastive objective.

    For each normal embedding the positives are all other normals, aggregated
    inside the log; the denominator collects all pseudo embeddings (including
    index i) plus the other normals:

        per_i = -log( sum_{j != i} exp(s(z_i, z_j)) /
                      ( sum_l exp(s(z_i, zt_l)) + sum_{l != i} exp(s(z_i, z_l)) ) )

    With every embedding identical this evaluates to log((2N-1)/(N-1)).
    """
    value, _, _ = contrastive_full_backward(z_normal, z_pseudo, tau, need_grad=False)
    return value


def contrastive_full_backward(z_normal, z_pseudo, tau, need_grad=True):
    """Returns (value, grad_z_normal, grad_z_pseudo) of the batch-mean loss."""
    n = z_normal.shape[0]
    if n < 2:
        raise BatchTooSmallError(f"contrastive loss needs N >= 2, got {n}")
    if tau <= 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    if (
        need_grad
        and _contrastive_full_kernel is not None
        and z_normal.flags.c_contiguous
        and z_pseudo.flags.c_contiguous
        and z_normal.shape == z_pseudo.shape
    ):
        value, grad_zn, grad_zp = _contrastive_full_kernel(z_normal, z_pseudo, float(tau))
        if value < 0.0:  # sentinel for a zero-norm row
            raise DegenerateEmbeddingError("contrastive_full: zero-norm embedding")
        return float(value), grad_zn, grad_zp
    u, u_norms = _normalize_rows(z_normal, "contrastive_full")
    v, v_norms = _normalize_rows(z_pseudo, "contrastive_full")
    s_zz = (u @ u.T) / tau
    s_zt = (u @ v.T) / tau

    e_zz = np.exp(s_zz)
    np.fill_diagonal(e_zz, 0.0)  # j != i, l != i for the normal-normal terms
    e_zt = np.exp(s_zt)
    num = e_zz.sum(axis=1)
    den = e_zt.sum(axis=1) + num

    per_i = np.log(den) - np.log(num)
    value = float(per_i.mean())
    if not need_grad:
        return value, None, None

    # gradients wrt the similarity matrices (batch mean folded in)
    g_zz = (e_zz / den[:, None] - e_zz / num[:, None]) / n
    g_zt = e_zt / den[:, None] / n

    du = (g_zz @ u + g_zz.T @ u + g_zt @ v) / tau
    dv = (g_zt.T @ u) / tau

    grad_zn = (du - u * np.sum(u * du, axis=1, keepdims=True)) / u_norms
    grad_zp = (dv - v * np.sum(v * dv, axis=1, keepdims=True)) / v_norms
    return value, grad_zn, grad_zp


def contrastive_mean(z_normal, z_pseudo, tau):
    """Simplified guidance contrasting each normal against the two batch-mean
    embeddings."""
    value, _, _ = contrastive_mean_backward(z_normal, z_pseudo, tau, need_grad=False)
    return value


def _cos_grads(z, w, tau):
    """s(z_i, w) rows with grads wrt z_i and w; z is N x E, w a single vector."""
    zn = np.linalg.norm(z, axis=1, keepdims=True)
    wn = np.linalg.norm(w)
    if np.any(zn == 0.0) or wn == 0.0:
        raise DegenerateEmbeddingError("contrastive_mean: zero-norm embedding")
    zh = z / zn
    wh = w / wn
    cos = zh @ wh
    s = cos / tau
    ds_dz = (wh[None, :] - zh * cos[:, None]) / (tau * zn)
    ds_dw = (zh - np.outer(cos, wh)) / (tau * wn)
    return s, ds_dz, ds_dw


def contrastive_mean_backward(z_normal, z_pseudo, tau, need_grad=True):
    if tau <= 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    n = z_normal.shape[0]
    zbar = z_normal.mean(axis=0)
    tbar = z_pseudo.mean(axis=0)
    a, da_dz, da_dzbar = _cos_grads(z_normal, zbar, tau)
    b, db_dz, db_dtbar = _cos_grads(z_normal, tbar, tau)
    # -log(e^a / (e^b + e^a)) = softplus(b - a)
    diff = b - a
    value = float(np.logaddexp(0.0, diff).mean())
    if not need_grad:
        return value, None, None

    w = _sigmoid(diff) / n  # d value / d diff_i
    grad_zn = w[:, None] * (db_dz - da_dz)
    grad_zbar = -(w[:, None] * da_dzbar).sum(axis=0)
    grad_tbar = (w[:, None] * db_dtbar).sum(axis=0)
    grad_zn = grad_zn + grad_zbar[None, :] / n
    m = z_pseudo.shape[0]
    grad_zp = np.tile(grad_tbar / m, (m, 1))
    return value, grad_zn, grad_zp


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def contrastive_guidance_backward(guidance, z_normal, z_pseudo, tau):
    """Dispatch helper: (value, grad_zn, grad_zp); zeros when guidance is off."""
    if guidance == GUIDANCE_FULL:
        return contrastive_full_backward(z_normal, z_pseudo, tau)
    if guidance == GUIDANCE_MEAN:
        return contrastive_mean_backward(z_normal, z_pseudo, tau)
    if guidance == GUIDANCE_NONE:
        return 0.0, None, None
    raise ValueError(f"unknown guidance mode {guidance!r}")


def total_loss(
    y_hat,
    y,
    alpha,
    beta,
    mu,
    logvar,
    z_normal,
    z_pseudo,
    *,
    lam,
    nu,
    gamma,
    tau,
    strategy,
    guidance,
):
    """Combine the four terms into one batch-averaged LossBreakdown.

    ``y_hat``/``y`` span the mixed 2N-row batch; the generator terms average
    over the N normal samples.  With the Gaussian strategy there is no
    generator, so its two terms are identically zero; with guidance off the
    contrastive term is omitted.
    """
    ce = float(np.mean(bce(y_hat, y)))
    if strategy == Strategy.GAUSSIAN:
        noise = 0.0
        kl = 0.0
    else:
        noise = float(np.mean(noise_constraint_loss(alpha, beta)))
        kl = float(np.mean(kl_divergence(mu, logvar)))
    if guidance == GUIDANCE_NONE:
        contrast = 0.0
    elif guidance == GUIDANCE_MEAN:
        contrast = contrastive_mean(z_normal, z_pseudo, tau)
    else:
        contrast = contrastive_full(z_normal, z_pseudo, tau)
    total = ce + lam * noise + nu * kl + gamma * contrast
    if not np.isfinite(total):
        raise FloatingPointError(f"non-finite loss: {total}")
    return LossBreakdown(ce=ce, noise=noise, kl=kl, contrastive=contrast, total=total)
