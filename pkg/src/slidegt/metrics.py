"""Binary classification metrics on positive-class scores.

AUC uses the rank formulation of the pairwise statistic: the probability that
a random positive outscores a random negative, with ties worth half.  This is
exactly the area under the tie-grouped ROC curve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError


@dataclass
class TaskMetrics:
    auc: float | None
    acc: float
    f1: float
    n: int


def _average_ranks(values):
    """1-based ranks with ties sharing their average rank."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auc_score(scores, labels):
    """Pairwise win rate of positives over negatives (ties count 0.5).

    Returns None when only one class is present.
    """
    scores, labels = _validate(scores, labels)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = _average_ranks(scores)
    rank_sum = ranks[labels == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def accuracy(scores, labels, threshold=0.5):
    """Fraction of correct predictions; positive iff score > threshold."""
    scores, labels = _validate(scores, labels)
    pred = scores > threshold
    return float((pred == (labels == 1)).mean())


def f1_score(scores, labels, threshold=0.5):
    """F1 of the positive class; 0.0 when precision or recall is undefined."""
    scores, labels = _validate(scores, labels)
    pred = scores > threshold
    pos = labels == 1
    tp = int((pred & pos).sum())
    fp = int((pred & ~pos).sum())
    fn = int((~pred & pos).sum())
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return float(2.0 * precision * recall / (precision + recall))


def compute_metrics(scores, labels):
    scores, labels = _validate(scores, labels)
    return TaskMetrics(
        auc=auc_score(scores, labels),
        acc=accuracy(scores, labels),
        f1=f1_score(scores, labels),
        n=len(labels),
    )


def _validate(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 1 or labels.shape != scores.shape:
        raise ContractError(
            f"scores and labels must be flat and equal length, got "
            f"{scores.shape} and {labels.shape}")
    if scores.size == 0:
        raise ContractError("metrics need at least one sample")
    if not np.isin(labels, (0, 1)).all():
        raise ContractError("labels must be 0/1")
    return scores, labels.astype(np.intp)


def mean_std(values):
    """Sample mean and std (ddof=1; std is 0.0 for a single value)."""
    arr = np.asarray([v for v in values if v is not None], dtype=np.float64)
    if arr.size == 0:
        return None, None
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), std
