"""Training objectives: cross-entropy and the clustering regularizer.

The clustering regularizer scores a soft assignment S (rows sum to 1) against
the self-loop adjacency: the cut term -Tr(S'AS)/Tr(S'DS) lives in [-1, 0] and
rewards assignments that keep edges inside clusters; the orthogonality term
|| S'S/||S'S||_F - I/sqrt(p) ||_F lives in [0, 2] and rewards balanced,
near-hard assignments.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import tensor as T
from .errors import ContractError
from .tensor import Tensor


@dataclass
class LossWeights:
    """Mixing weights for the joint objective."""

    typing: float = 1.0
    staging: float = 1.0
    mincut: float = 1.0


class MinCutTerms(NamedTuple):
    cut: Tensor
    ortho: Tensor
    total: Tensor


def cross_entropy(logits, labels):
    """Mean negative log-likelihood of integer labels under row softmax.

    logits: (B, C) tensor; labels: length-B sequence of ints in [0, C).
    """
    labels = np.asarray(labels, dtype=np.intp)
    if logits.data.ndim != 2:
        raise ContractError(f"cross_entropy needs 2-D logits, got shape {logits.shape}")
    b, c = logits.shape
    if labels.shape != (b,):
        raise ContractError(f"expected {b} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ContractError(f"labels must lie in [0, {c}), got {labels.tolist()}")
    onehot = np.zeros((b, c))
    onehot[np.arange(b), labels] = 1.0
    picked = T.mul(T.log_softmax_rows(logits), T.constant(onehot))
    return T.scale(T.sum_all(picked), -1.0 / b)


def mincut_loss(s, adj_tilde, deg_tilde):
    """Cut and orthogonality terms for a soft assignment.

    s: (n, p) tensor with rows on the simplex; adj_tilde: (n, n) self-loop
    adjacency; deg_tilde: (n,) its row sums.  Returns (cut, ortho, total).
    """
    n, p = s.shape
    if p < 1:
        raise ContractError("assignment needs at least one cluster column")
    row_sums = s.data.sum(axis=1)
    if not np.allclose(row_sums, 1.0, atol=1e-6):
        raise ContractError("assignment rows must sum to 1")

    a = T.constant(np.asarray(adj_tilde, dtype=np.float64))
    deg_col = T.constant(np.asarray(deg_tilde, dtype=np.float64).reshape(n, 1))

    # Tr(S'AS) = sum((A S) * S); Tr(S'DS) = sum(deg * S * S) since D is diagonal
    cut_num = T.sum_all(T.mul(T.matmul(a, s), s))
    cut_den = T.sum_all(T.mul(T.mul(s, s), deg_col))
    cut = T.scale(T.div(cut_num, cut_den), -1.0)

    sts = T.matmul(T.transpose(s), s)
    fro = T.sqrt(T.sum_all(T.mul(sts, sts)))
    target = T.constant(np.eye(p) / np.sqrt(p))
    diff = T.sub(T.div(sts, fro), target)
    ortho = T.sqrt(T.sum_all(T.mul(diff, diff)))

    return MinCutTerms(cut, ortho, T.add(cut, ortho))


def total_loss(task_losses, mincut_total, weights):
    """Weighted sum w_typing * L_typing + w_staging * L_staging + w_mincut * L_cluster.

    task_losses: mapping task name -> scalar tensor; absent tasks contribute
    nothing (single-task training).  mincut_total: scalar tensor or None.
    """
    terms = []
    for task, loss in task_losses.items():
        w = getattr(weights, task, None)
        if w is None:
            raise ContractError(f"no loss weight defined for task {task!r}")
        terms.append(T.scale(loss, w))
    if mincut_total is not None:
        terms.append(T.scale(mincut_total, weights.mincut))
    if not terms:
        return T.constant(np.asarray(0.0))
    out = terms[0]
    for term in terms[1:]:
        out = T.add(out, term)
    return out
