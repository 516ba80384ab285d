"""Accuracy, binarized split AUCs and the Obuchowski index.

Ranking metrics use a scalar score per sample: the sum of the ordinal
probabilities, i.e. the expected number of thresholds exceeded.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from itertools import combinations

import numpy as np


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    split_aucs: tuple
    mean_auc: float
    obuchowski: float
    n: int
    K: int

    def to_dict(self) -> dict:
        out = asdict(self)
        out["split_aucs"] = list(self.split_aucs)
        return out


def ordinal_score(probs) -> np.ndarray:
    return np.asarray(probs, dtype=np.float64).sum(axis=-1)


def accuracy(y_true, y_pred) -> float:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.size == 0:
        raise ValueError("accuracy of an empty prediction set is undefined")
    if y_true.shape != y_pred.shape:
        raise ValueError(f"shape mismatch {y_true.shape} vs {y_pred.shape}")
    return float(np.mean(y_true == y_pred))


def binary_auc(scores_pos, scores_neg) -> float:
    """P(pos > neg) + 0.5 P(pos == neg) over all cross pairs."""
    pos = np.asarray(scores_pos, dtype=np.float64)
    neg = np.sort(np.asarray(scores_neg, dtype=np.float64))
    if pos.size == 0 or neg.size == 0:
        raise ValueError("binary_auc needs nonempty positive and negative groups")
    below = np.searchsorted(neg, pos, side="left")
    not_above = np.searchsorted(neg, pos, side="right")
    wins = below.sum()
    ties = (not_above - below).sum()
    return float((wins + 0.5 * ties) / (pos.size * neg.size))


def split_aucs(y_true, scores, K: int) -> tuple[list, float]:
    """AUC of classes <= i vs > i for i = 1..K-1; ``None`` where a side is empty."""
    y_true = np.asarray(y_true)
    scores = np.asarray(scores, dtype=np.float64)
    aucs: list = []
    for i in range(1, K):
        pos, neg = scores[y_true > i], scores[y_true <= i]
        aucs.append(binary_auc(pos, neg) if pos.size and neg.size else None)
    present = [a for a in aucs if a is not None]
    return aucs, (float(np.mean(present)) if present else float("nan"))


def obuchowski(y_true, scores, K: int) -> float:
    """Mean over class pairs s < t of P(score_t > score_s), ties counted half."""
    y_true = np.asarray(y_true)
    scores = np.asarray(scores, dtype=np.float64)
    groups = {c: scores[y_true == c] for c in range(1, K + 1)}
    pair_aucs = [
        binary_auc(groups[t], groups[s])
        for s, t in combinations(range(1, K + 1), 2)
        if groups[s].size and groups[t].size
    ]
    if not pair_aucs:
        raise ValueError("obuchowski index needs at least two classes present")
    return float(np.mean(pair_aucs))


def evaluate(y_true, y_pred, scores, K: int) -> MetricsReport:
    aucs, mean_auc = split_aucs(y_true, scores, K)
    return MetricsReport(
        accuracy=accuracy(y_true, y_pred),
        split_aucs=tuple(aucs),
        mean_auc=mean_auc,
        obuchowski=obuchowski(y_true, scores, K),
        n=int(np.asarray(y_true).size),
        K=K,
    )
