"""ROC-AUC (Mann-Whitney with half-credit ties) and run aggregation."""

from __future__ import annotations

import numpy as np

from .errors import AucUndefinedError


def roc_auc(scores, is_normal):
    """AUC with normal as the positive class and higher score = more normal.

    Sort-based midrank implementation, O(n log n); ties contribute 1/2,
    matching trapezoidal ROC integration.
    """
    scores = np.asarray(scores, dtype=np.float64)
    is_normal = np.asarray(is_normal, dtype=bool)
    if scores.shape != is_normal.shape or scores.ndim != 1:
        raise ValueError("scores and is_normal must be equal-length 1-D arrays")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    n_pos = int(is_normal.sum())
    n_neg = is_normal.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise AucUndefinedError(
            f"AUC needs both classes, got {n_pos} normal / {n_neg} anomalous"
        )
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    ranks = np.empty(scores.size)
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # midrank, 1-based
        i = j + 1
    rank_sum = ranks[is_normal].sum()
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_auc_pairwise(scores, is_normal):
    """O(n^2) pairwise-count oracle; kept as the independent check."""
    scores = np.asarray(scores, dtype=np.float64)
    is_normal = np.asarray(is_normal, dtype=bool)
    pos = scores[is_normal]
    neg = scores[~is_normal]
    if pos.size == 0 or neg.size == 0:
        raise AucUndefinedError("AUC needs both classes")
    wins = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return float((wins + 0.5 * ties) / (pos.size * neg.size))


def aggregate(values):
    """(mean, sample std); n = 1 gives std 0."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("aggregate of empty list")
    mean = float(values.mean())
    std = 0.0 if values.size == 1 else float(values.std(ddof=1))
    return mean, std
