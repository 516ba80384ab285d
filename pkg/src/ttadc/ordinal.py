"""Ordinal encoding and label-distribution algebra.

Classes are numbered 1..K. Ordinal bit ``i`` (1-based, i = 1..K-1) means
"class > i", so the positive rate of bit ``i`` under a label distribution is
the tail mass P(class > i).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RATE_EPS = 1e-6


@dataclass(frozen=True)
class LabelDistribution:
    probs: tuple

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size < 2:
            raise ValueError(f"label distribution needs at least 2 classes, got {p.shape}")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("label distribution entries must be finite and nonnegative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"label distribution must sum to 1, got {p.sum()!r}")
        object.__setattr__(self, "probs", tuple(float(v) for v in p))

    @classmethod
    def normalized(cls, weights) -> "LabelDistribution":
        w = np.asarray(weights, dtype=np.float64)
        return cls(tuple(w / w.sum()))

    @classmethod
    def uniform(cls, K: int) -> "LabelDistribution":
        return cls(tuple(np.full(K, 1.0 / K)))

    @property
    def K(self) -> int:
        return len(self.probs)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.probs)

    def to_json(self) -> list:
        return list(self.probs)


@dataclass(frozen=True)
class DominatingSpec:
    """Class ``j`` carries ``lam`` times the mass of each other class."""

    j: int
    lam: float
    K: int

    def __post_init__(self):
        if self.K < 2:
            raise ValueError(f"K must be >= 2, got {self.K}")
        if not 1 <= self.j <= self.K:
            raise ValueError(f"dominating class {self.j} outside 1..{self.K}")
        if self.lam < 1:
            raise ValueError(f"lambda must be >= 1, got {self.lam}")


def _probs(dist) -> np.ndarray:
    if isinstance(dist, LabelDistribution):
        return dist.as_array()
    return LabelDistribution(tuple(np.asarray(dist, dtype=np.float64))).as_array()


def encode(cls: int, K: int) -> np.ndarray:
    if not 1 <= cls <= K:
        raise ValueError(f"class {cls} outside 1..{K}")
    return (cls > np.arange(1, K)).astype(np.float64)


def encode_batch(labels, K: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 1 or labels.max() > K):
        raise ValueError(f"labels outside 1..{K}")
    return (labels[:, None] > np.arange(1, K)[None, :]).astype(np.float64)


def decode(probs, monotone: bool = False) -> int:
    """Class from an ordinal probability vector.

    The default takes the highest bit above 0.5, even when lower bits are
    below it. ``monotone=True`` instead counts leading bits above 0.5.
    """
    p = np.asarray(probs, dtype=np.float64)
    above = p > 0.5
    if monotone:
        below = np.flatnonzero(~above)
        return int(below[0] + 1) if below.size else p.size + 1
    hits = np.flatnonzero(above)
    return int(hits[-1] + 2) if hits.size else 1


def decode_batch(probs, monotone: bool = False) -> np.ndarray:
    p = np.asarray(probs, dtype=np.float64)
    above = p > 0.5
    if monotone:
        leading = np.cumprod(above, axis=1)
        return leading.sum(axis=1).astype(int) + 1
    m = p.shape[1]
    # index of last True, 0 when none
    last = np.where(above.any(axis=1), m - np.argmax(above[:, ::-1], axis=1), 0)
    return last.astype(int) + 1


def tail_sums(dist) -> np.ndarray:
    """Unclamped P(class > i) for i = 1..K-1."""
    p = _probs(dist)
    return np.cumsum(p[::-1])[::-1][1:]


def positive_rates(dist, eps: float = RATE_EPS) -> np.ndarray:
    return np.clip(tail_sums(dist), eps, 1.0 - eps)


def one_dominating_rates(spec: DominatingSpec) -> np.ndarray:
    i = np.arange(1, spec.K, dtype=np.float64)
    indicator = (i >= spec.j).astype(np.float64)
    return 1.0 - (i - indicator * (1.0 - spec.lam)) / (spec.lam + spec.K - 1)


def uniform_rates(K: int) -> np.ndarray:
    """Closed-form positive rates 1 - i/K of the uniform prior.

    Bitwise equal to ``one_dominating_rates`` at lambda = 1 for every j,
    which tail sums of 1/K are not.
    """
    return 1.0 - np.arange(1, K, dtype=np.float64) / K


def dominating_distribution(spec: DominatingSpec) -> LabelDistribution:
    p = np.full(spec.K, 1.0 / (spec.lam + spec.K - 1))
    p[spec.j - 1] = spec.lam / (spec.lam + spec.K - 1)
    return LabelDistribution(tuple(p))


def empirical_distribution(labels, K: int) -> LabelDistribution:
    counts = np.bincount(np.asarray(labels, dtype=int) - 1, minlength=K).astype(np.float64)
    return LabelDistribution(tuple(counts / counts.sum()))
