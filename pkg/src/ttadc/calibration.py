"""Compensating term and calibrated ordinal BCE.

A head trained with the compensating term ``delta`` learns logits ``phi``
whose plain sigmoid describes the *expected* label distribution, while
``sigmoid(phi - delta)`` fits the training distribution the data came from.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .ordinal import DominatingSpec, one_dominating_rates


def compensating_term(r_prime: float, r: float) -> float:
    if not (0.0 < r_prime < 1.0 and 0.0 < r < 1.0):
        raise ad.DomainError(f"rates must lie strictly inside (0, 1), got r'={r_prime}, r={r}")
    # difference of log-odds: exactly zero when the rates agree
    return math.log(r_prime / (1.0 - r_prime)) - math.log(r / (1.0 - r))


def compensating_terms(r_prime, r) -> np.ndarray:
    r_prime = np.asarray(r_prime, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if r_prime.shape != r.shape:
        raise ValueError(f"rate vectors differ in length: {r_prime.shape} vs {r.shape}")
    return np.array([compensating_term(a, b) for a, b in zip(r_prime, r)])


def calibrated_prob(phi, delta):
    """sigmoid(phi - delta); accepts scalars or arrays."""
    z = np.asarray(phi, dtype=np.float64) - np.asarray(delta, dtype=np.float64)
    out = ad._stable_sigmoid(np.atleast_1d(z))
    return float(out[0]) if np.ndim(z) == 0 else out.reshape(z.shape)


def odds(p):
    p = np.asarray(p, dtype=np.float64)
    return p / (1.0 - p)


@dataclass(frozen=True)
class HeadSpec:
    k: int
    expected_rates: tuple
    train_rates: tuple
    deltas: tuple
    lam: float | None = None
    j: int | None = None

    @classmethod
    def build(cls, k: int, expected_rates, train_rates, lam=None, j=None) -> "HeadSpec":
        deltas = compensating_terms(expected_rates, train_rates)
        return cls(
            k=k,
            expected_rates=tuple(float(v) for v in expected_rates),
            train_rates=tuple(float(v) for v in train_rates),
            deltas=tuple(float(v) for v in deltas),
            lam=None if lam is None else float(lam),
            j=j,
        )

    @classmethod
    def dominating(cls, k: int, lam: float, train_rates) -> "HeadSpec":
        """Head ``k`` calibrated toward the k-dominating distribution."""
        K = len(train_rates) + 1
        expected = one_dominating_rates(DominatingSpec(j=k, lam=lam, K=K))
        return cls.build(k, expected, train_rates, lam=lam, j=k)

    @classmethod
    def uncalibrated(cls, k: int, train_rates) -> "HeadSpec":
        return cls.build(k, train_rates, train_rates)

    @property
    def delta_array(self) -> np.ndarray:
        return np.asarray(self.deltas)

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "lambda": self.lam,
            "j": self.j,
            "expected_rates": list(self.expected_rates),
            "train_rates": list(self.train_rates),
            "deltas": list(self.deltas),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "HeadSpec":
        return cls(
            k=int(obj["k"]),
            expected_rates=tuple(obj["expected_rates"]),
            train_rates=tuple(obj["train_rates"]),
            deltas=tuple(obj["deltas"]),
            lam=obj.get("lambda"),
            j=obj.get("j"),
        )


def calibrated_bce(phi: ad.Tensor, target, spec: HeadSpec | np.ndarray) -> ad.Tensor:
    """Calibrated ordinal BCE as a scalar graph node.

    ``phi`` is a length K-1 logit vector or an (n, K-1) batch; for a batch
    the per-sample sums are averaged. Uses
    ``-log p = softplus(-z)`` and ``-log(1-p) = softplus(z)`` with
    ``z = phi - delta``, which collapses to ``softplus(z) - y*z``.
    """
    phi = phi if isinstance(phi, ad.Tensor) else ad.tensor(phi)
    y = np.asarray(target, dtype=np.float64)
    deltas = spec.delta_array if isinstance(spec, HeadSpec) else np.asarray(spec, dtype=np.float64)
    if y.shape != phi.shape or deltas.shape[-1:] != phi.shape[-1:]:
        raise ValueError(
            f"calibrated_bce: logits {phi.shape}, targets {y.shape}, deltas {deltas.shape} disagree"
        )
    if phi.value.ndim == 1:
        z = ad.sub(phi, deltas)
        return ad.sum(ad.sub(ad.softplus(z), ad.mul(z, y)))
    z = ad.add_rowwise(phi, -deltas)
    per_bit = ad.sub(ad.softplus(z), ad.mul(z, y))
    return ad.mul(ad.sum(per_bit), 1.0 / phi.shape[0])
