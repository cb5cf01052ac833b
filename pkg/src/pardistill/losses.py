"""Objective functions: hard/soft cross-entropy, KL divergence, logit gradient.

Distributions are 1-D float64 probability vectors.  A probability floor of
1e-12 is applied to the *second* argument inside logarithms only; terms where
the first argument is exactly zero contribute zero regardless of the second
(the 0 ln 0 := 0 convention), so losses stay finite even when a teacher emits
exact zeros.
"""

from __future__ import annotations

import numpy as np

from .errors import UsageError

PROB_FLOOR = 1e-12


def _as_vector(p) -> np.ndarray:
    arr = np.asarray(p, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise UsageError(f"expected a non-empty 1-D distribution, got shape {arr.shape}")
    return arr


def hard_ce(q, label: int) -> float:
    """-ln q[label], with q floored at PROB_FLOOR.

    Implemented as soft cross-entropy against a one-hot target so the
    one-hot reduction of ``soft_ce`` holds bit-for-bit by construction.
    """
    q = _as_vector(q)
    if not isinstance(label, (int, np.integer)) or not 0 <= label < q.size:
        raise UsageError(f"label {label!r} out of range for {q.size} classes")
    target = np.zeros(q.size, dtype=np.float64)
    target[label] = 1.0
    return soft_ce(target, q)


def soft_ce(p, q) -> float:
    """Cross-entropy sum(-p_i ln q_i); zero-probability p terms contribute 0."""
    p = _as_vector(p)
    q = _as_vector(q)
    if p.size != q.size:
        raise UsageError(f"distribution length mismatch: {p.size} vs {q.size}")
    mask = p != 0.0
    return float(-(p[mask] * np.log(np.maximum(q[mask], PROB_FLOOR))).sum())


def entropy(p) -> float:
    """Shannon entropy sum(-p_i ln p_i) with 0 ln 0 := 0."""
    p = _as_vector(p)
    mask = p != 0.0
    return float(-(p[mask] * np.log(p[mask])).sum())


def kl(p, q) -> float:
    """KL divergence sum(p_i ln(p_i / q_i)); q floored, p = 0 terms contribute 0."""
    p = _as_vector(p)
    q = _as_vector(q)
    if p.size != q.size:
        raise UsageError(f"distribution length mismatch: {p.size} vs {q.size}")
    mask = p != 0.0
    pm = p[mask]
    return float((pm * (np.log(pm) - np.log(np.maximum(q[mask], PROB_FLOOR)))).sum())


def grad_logits(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Gradient of soft cross-entropy w.r.t. the logits that produced q: q - p.

    Both arguments are (batch x classes) matrices of target and predicted
    distributions.  Scaling for a batch-mean objective is the caller's job.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise UsageError(f"batch shape mismatch: {p.shape} vs {q.shape}")
    return q - p


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """Rows of exact 0/1 target distributions from integer class labels."""
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise UsageError(f"label out of range for {num_classes} classes")
    out = np.zeros((labels.size, num_classes), dtype=np.float64)
    out[np.arange(labels.size), labels] = 1.0
    return out


def mean_soft_ce(p: np.ndarray, q: np.ndarray) -> float:
    """Frame-mean soft cross-entropy over a (batch x classes) pair.

    For rows where p is one-hot this is bit-identical to the mean of
    ``hard_ce`` over the batch: the zero terms add exactly 0.0.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 2:
        raise UsageError(f"batch shape mismatch: {p.shape} vs {q.shape}")
    terms = np.where(p != 0.0, -p * np.log(np.maximum(q, PROB_FLOOR)), 0.0)
    return float(terms.sum(axis=1).mean())


def mean_hard_ce(q: np.ndarray, labels: np.ndarray) -> float:
    """Frame-mean hard-label cross-entropy (same code path as mean_soft_ce)."""
    q = np.asarray(q, dtype=np.float64)
    return mean_soft_ce(one_hot(labels, q.shape[1]), q)
