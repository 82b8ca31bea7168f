"""Clustering quality metrics.

All functions take a ground-truth labeling first and a predicted labeling
second. Labels may be any hashable integers; they are canonicalized to
``0..c-1`` internally.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import LengthMismatch


def canonicalize(labels):
    """Return ``(values, codes)`` with codes in ``0..c-1``."""
    labels = np.asarray(labels).ravel()
    values, codes = np.unique(labels, return_inverse=True)
    return values, codes.ravel()


def _check(truth, pred):
    truth = np.asarray(truth).ravel()
    pred = np.asarray(pred).ravel()
    if truth.size != pred.size:
        raise LengthMismatch(f"label vectors differ in length: {truth.size} vs {pred.size}")
    if truth.size == 0:
        raise LengthMismatch("label vectors are empty")
    return truth, pred


def contingency(truth, pred):
    """Counts table with true classes on rows and predicted clusters on columns."""
    truth, pred = _check(truth, pred)
    _, t = canonicalize(truth)
    _, p = canonicalize(pred)
    table = np.zeros((t.max() + 1, p.max() + 1), dtype=np.int64)
    np.add.at(table, (t, p), 1)
    return table


def optimal_mapping(truth, pred):
    """Cluster-to-class assignment maximizing the number of matched samples.

    Returns ``(mapping, matched)`` where ``mapping`` sends predicted cluster
    labels to true class labels. With more clusters than classes the surplus
    clusters stay unmapped.
    """
    truth, pred = _check(truth, pred)
    tv, _ = canonicalize(truth)
    pv, _ = canonicalize(pred)
    C = contingency(truth, pred)
    rows, cols = linear_sum_assignment(C, maximize=True)
    mapping = {pv[c].item(): tv[r].item() for r, c in zip(rows, cols)}
    return mapping, int(C[rows, cols].sum())


def accuracy(truth, pred):
    truth, pred = _check(truth, pred)
    _, matched = optimal_mapping(truth, pred)
    return matched / truth.size


def _entropy(counts):
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def nmi(truth, pred):
    """Mutual information divided by the larger of the two marginal entropies."""
    C = contingency(truth, pred).astype(float)
    n = C.sum()
    h_true = _entropy(C.sum(axis=1))
    h_pred = _entropy(C.sum(axis=0))
    if max(h_true, h_pred) == 0.0:
        return 1.0
    pij = C / n
    outer = np.outer(C.sum(axis=1), C.sum(axis=0)) / n**2
    nz = pij > 0
    # sorted summation makes the result exactly symmetric in its arguments
    mi = float(np.sort(pij[nz] * np.log(pij[nz] / outer[nz])).sum())
    return max(0.0, mi) / max(h_true, h_pred)


def _pairs(x):
    x = np.asarray(x, dtype=np.int64)
    return int((x * (x - 1) // 2).sum())


def pair_counts(truth, pred):
    """``(same_both, same_pred, same_true, total)`` pair counts."""
    C = contingency(truth, pred)
    n = int(C.sum())
    return _pairs(C), _pairs(C.sum(axis=0)), _pairs(C.sum(axis=1)), n * (n - 1) // 2


def _ratio(num, den):
    # vacuous ratios (no pairs to score) count as perfect
    return 1.0 if den == 0 else num / den


def adjusted_rand_index(truth, pred):
    tp, pred_pairs, true_pairs, total = pair_counts(truth, pred)
    if total == 0:
        return 1.0
    expected = pred_pairs * true_pairs / total
    top = 0.5 * (pred_pairs + true_pairs)
    if top == expected:
        return 1.0
    return (tp - expected) / (top - expected)


def purity(truth, pred):
    C = contingency(truth, pred)
    return float(C.max(axis=0).sum() / C.sum())


def conditional_entropy(truth, pred, base=None):
    """Size-weighted entropy of the class distribution inside each cluster."""
    C = contingency(truth, pred).astype(float)
    n = C.sum()
    h = sum(C[:, j].sum() / n * _entropy(C[:, j]) for j in range(C.shape[1]))
    if base is not None:
        h /= np.log(base)
    return float(h)


@dataclass
class ClusteringMetrics:
    acc: float
    nmi: float
    f_score: float
    precision: float
    recall: float
    ari: float
    purity: float
    entropy: float
    entropy_raw: float

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def extended_metrics(truth, pred):
    """Acc, NMI and the pair-counting / purity / entropy suite.

    ``entropy`` is normalized by ``log(#classes)`` so it lies in [0, 1];
    ``entropy_raw`` is the unnormalized value in bits. Lower is better for
    both.
    """
    truth, pred = _check(truth, pred)
    tp, pred_pairs, true_pairs, _ = pair_counts(truth, pred)
    precision = _ratio(tp, pred_pairs)
    recall = _ratio(tp, true_pairs)
    f_score = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    n_classes = np.unique(truth).size
    raw = conditional_entropy(truth, pred)
    return ClusteringMetrics(
        acc=accuracy(truth, pred),
        nmi=nmi(truth, pred),
        f_score=f_score,
        precision=precision,
        recall=recall,
        ari=adjusted_rand_index(truth, pred),
        purity=purity(truth, pred),
        entropy=raw / np.log(n_classes) if n_classes > 1 else 0.0,
        entropy_raw=raw / np.log(2.0),
    )
