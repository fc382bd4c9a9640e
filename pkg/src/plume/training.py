"""Joint generator+classifier training: per-step backward, epochs, runs.

One step: generate pseudo-anomalies from the normal batch with the configured
strategy, classify the mixed 2N batch, combine the four loss terms, and push
analytic gradients back through both networks before a single AdamW update at
the cyclical learning rate.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from . import classifier as clf_mod
from . import perturbator as pert_mod
from .classifier import ClassifierParams
from .config import TrainConfig
from .data import batch_iterator
from .errors import AucUndefinedError, NoDataError
from .losses import (
    GUIDANCE_NONE,
    LossBreakdown,
    bce,
    bce_logit_grad,
    contrastive_guidance_backward,
)
from .metrics import aggregate, roc_auc
from .optim import AdamW, AdamWConfig, ClrConfig, clr_lr_at
from .perturbator import (
    PerturbatorParams,
    Strategy,
    apply_strategy,
    apply_strategy_backward,
    decode,
    decode_backward,
    encode,
    encode_backward,
    kl_divergence,
    kl_divergence_grad,
    noise_constraint_grad,
    noise_constraint_loss,
    perturb_gaussian,
    reparameterize,
    reparameterize_backward,
)


@dataclass
class PlumeModel:
    classifier: ClassifierParams
    perturbator: PerturbatorParams | None = None

    @classmethod
    def init(cls, cfg, rng):
        classifier = ClassifierParams.init(
            cfg.dim, rng, hidden1=cfg.hidden1, hidden2=cfg.hidden2
        )
        perturbator = None
        if cfg.strategy_enum != Strategy.GAUSSIAN:
            perturbator = PerturbatorParams.init(cfg.dim, rng, cfg.strategy_enum)
        return cls(classifier=classifier, perturbator=perturbator)

    def named_params(self):
        params = dict(self.classifier.named())
        if self.perturbator is not None:
            params.update(self.perturbator.named())
        return params

    def zero_grad(self):
        for p in self.named_params().values():
            p.zero_grad()

    def snapshot(self):
        return copy.deepcopy(self)


def train_step(model, batch, cfg, eps_rng=None, frozen_eps=None):
    """Forward + backward on one normal batch; gradients are left in the
    parameter slots, values untouched.  Returns the LossBreakdown.

    ``frozen_eps`` replays a recorded reparameterization draw (used by the
    gradient checker); otherwise eps comes from ``eps_rng``.
    """
    strategy = cfg.strategy_enum
    clf = model.classifier
    pert = model.perturbator
    n = batch.shape[0]
    x = np.asarray(batch, dtype=np.float64)

    if strategy == Strategy.GAUSSIAN:
        alpha = beta = mu = logvar = None
        x_tilde = perturb_gaussian(x, cfg.gaussian_sigma, eps_rng)
    else:
        mu, logvar, enc_cache = encode(x, pert)
        if frozen_eps is not None:
            eps = frozen_eps
            z = mu + np.exp(0.5 * logvar) * eps
        else:
            z, eps = reparameterize(mu, logvar, eps_rng)
        alpha, beta, dec_cache = decode(z, pert, strategy)
        x_tilde = apply_strategy(strategy, x, alpha, beta)

    mixed = np.vstack([x, x_tilde])
    y = np.concatenate([np.ones(n), np.zeros(n)])
    y_hat, z_emb, _, caches = clf_mod.forward_train(mixed, clf)
    z_n, z_p = z_emb[:n], z_emb[n:]

    ce = float(np.mean(bce(y_hat, y)))
    if strategy == Strategy.GAUSSIAN:
        noise_val = 0.0
        kl_val = 0.0
    else:
        noise_val = float(np.mean(noise_constraint_loss(alpha, beta)))
        kl_val = float(np.mean(kl_divergence(mu, logvar)))
    c_val, g_zn, g_zp = contrastive_guidance_backward(cfg.guidance, z_n, z_p, cfg.tau)
    total = ce + cfg.lam * noise_val + cfg.nu * kl_val + cfg.gamma * c_val
    if not np.isfinite(total):
        raise FloatingPointError(f"training diverged: loss {total}")
    breakdown = LossBreakdown(
        ce=ce, noise=noise_val, kl=kl_val, contrastive=float(c_val), total=total
    )

    # --- backward ---
    g_logits = bce_logit_grad(y_hat, y)
    g_z_extra = None
    if cfg.guidance != GUIDANCE_NONE and cfg.gamma != 0.0:
        g_z_extra = cfg.gamma * np.vstack([g_zn, g_zp])
    g_mixed = clf_mod.backward_train(g_logits, g_z_extra, caches, clf)

    if strategy != Strategy.GAUSSIAN:
        g_x_tilde = g_mixed[n:]
        _, g_alpha, g_beta = apply_strategy_backward(
            strategy, g_x_tilde, x, alpha, beta
        )
        na, nb = noise_constraint_grad(alpha, beta)
        scale = cfg.lam / n
        if g_alpha is not None:
            g_alpha = g_alpha + scale * na
        if g_beta is not None:
            g_beta = g_beta + scale * nb
        g_z = decode_backward(g_alpha, g_beta, dec_cache, pert, strategy)
        g_mu, g_logvar = reparameterize_backward(g_z, logvar, eps)
        kmu, klv = kl_divergence_grad(mu, logvar)
        g_mu = g_mu + (cfg.nu / n) * kmu
        g_logvar = g_logvar + (cfg.nu / n) * klv
        encode_backward(g_mu, g_logvar, enc_cache, pert)
        # the input features are frozen, so the gradients flowing into x
        # (classifier direct path, perturbation path, encoder path) stop here

    return breakdown


def train_epoch(features, model, optimizer, cfg, clr, shuffle_rng, eps_rng, start_iter):
    """One pass over the shuffled training features; returns the epoch-mean
    LossBreakdown, the final lr used, and the next iteration index."""
    if features.shape[0] == 0:
        raise NoDataError("empty training set")
    sums = np.zeros(5)
    count = 0
    it = start_iter
    lr = clr_lr_at(it, clr)
    for idx in batch_iterator(features, cfg.batch_size, shuffle_rng):
        lr = clr_lr_at(it, clr)
        breakdown = train_step(model, features[idx], cfg, eps_rng=eps_rng)
        optimizer.step(lr)
        sums += (
            breakdown.ce,
            breakdown.noise,
            breakdown.kl,
            breakdown.contrastive,
            breakdown.total,
        )
        count += 1
        it += 1
    mean = sums / count
    epoch_losses = LossBreakdown(
        ce=mean[0], noise=mean[1], kl=mean[2], contrastive=mean[3], total=mean[4]
    )
    return epoch_losses, lr, it


@dataclass
class RunReport:
    run_id: int
    epochs: list = field(default_factory=list)  # one metrics dict per epoch
    best_auc: float = -1.0
    best_epoch: int = -1
    best_model: PlumeModel | None = None

    def record(self, entry):
        self.epochs.append(entry)


def fit(train_features, val_features, val_is_normal, cfg, run_id=0, seed=None, sink=None):
    """Train for cfg.epochs, evaluating validation AUC after every epoch and
    retaining the best-AUC model snapshot.

    ``sink``, when given, receives one metrics dict per epoch.  Three RNG
    streams (init, shuffle, eps) are derived from the seed so disabling one
    consumer does not shift the others.
    """
    if not (np.any(val_is_normal) and np.any(~np.asarray(val_is_normal, dtype=bool))):
        raise AucUndefinedError("validation set must contain both classes")
    seed = cfg.seed if seed is None else seed
    init_ss, shuffle_ss, eps_ss = np.random.SeedSequence(seed).spawn(3)
    init_rng = np.random.default_rng(init_ss)
    shuffle_rng = np.random.default_rng(shuffle_ss)
    eps_rng = np.random.default_rng(eps_ss)

    model = PlumeModel.init(cfg, init_rng)
    optimizer = AdamW(
        model.named_params(),
        AdamWConfig(
            beta1=cfg.beta1,
            beta2=cfg.beta2,
            eps=cfg.adam_eps,
            weight_decay=cfg.weight_decay,
        ),
    )
    batches_per_epoch = train_features.shape[0] // cfg.batch_size
    if batches_per_epoch == 0:
        raise NoDataError(
            f"{train_features.shape[0]} training rows < batch_size {cfg.batch_size}"
        )
    step_size = cfg.step_size_iters or 2 * batches_per_epoch
    clr = ClrConfig(base_lr=cfg.base_lr, max_lr=cfg.max_lr, step_size_iters=step_size)

    report = RunReport(run_id=run_id)
    it = 0
    for epoch in range(cfg.epochs):
        losses, lr, it = train_epoch(
            train_features, model, optimizer, cfg, clr, shuffle_rng, eps_rng, it
        )
        scores = clf_mod.score_batch(val_features, model.classifier)
        auc = roc_auc(scores, val_is_normal)
        entry = {"run_id": run_id, "epoch": epoch, "lr": lr, **losses.as_dict(),
                 "val_auc": auc}
        report.record(entry)
        if sink is not None:
            sink(entry)
        if auc > report.best_auc:
            report.best_auc = auc
            report.best_epoch = epoch
            report.best_model = model.snapshot()
    return report


def run_suite(train_features, val_features, val_is_normal, cfg, sink=None):
    """cfg.runs independent runs (seeds cfg.seed .. cfg.seed + runs - 1);
    returns (reports, mean_best_auc, std_best_auc)."""
    if cfg.runs < 1:
        raise ValueError("runs must be >= 1")
    reports = []
    for run_id in range(cfg.runs):
        reports.append(
            fit(
                train_features,
                val_features,
                val_is_normal,
                cfg,
                run_id=run_id,
                seed=cfg.seed + run_id,
                sink=sink,
            )
        )
    mean, std = aggregate([r.best_auc for r in reports])
    return reports, mean, std
