"""Test-time aggregation of calibrated heads.

Head weights are a softmax over free logits ``alpha``. Adaptation minimizes
the negative cosine similarity between aggregated outputs of two augmented
views of each unlabeled test input. Model parameters never enter the
adaptation graph.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .data import AugmentationSpec, augment
from .model import MultiHeadModel, head_probabilities
from .ordinal import decode_batch

NORM_EPS = 1e-12


@dataclass
class AggregationWeights:
    alpha: np.ndarray

    @classmethod
    def uniform(cls, K: int) -> "AggregationWeights":
        return cls(np.zeros(K))

    @classmethod
    def one_hot(cls, K: int, k: int, scale: float = 50.0) -> "AggregationWeights":
        alpha = np.zeros(K)
        alpha[k - 1] = scale
        return cls(alpha)

    @property
    def w(self) -> np.ndarray:
        return ad.softmax(self.alpha).value

    def __len__(self) -> int:
        return self.alpha.size


@dataclass(frozen=True)
class AdaptConfig:
    steps: int = 200
    batch_size: int = 32
    learning_rate: float = 50.0
    augmentation: AugmentationSpec = field(default_factory=AugmentationSpec)
    seed: int = 0

    def __post_init__(self):
        if self.steps < 0 or self.batch_size < 1 or self.learning_rate < 0:
            raise ValueError("steps >= 0, batch_size >= 1 and learning_rate >= 0 required")

    def to_json(self) -> dict:
        return asdict(self)


def _weights_array(weights) -> np.ndarray:
    return weights.w if isinstance(weights, AggregationWeights) else np.asarray(weights, dtype=np.float64)


def combine(head_probs: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Convex combination over the leading (head) axis."""
    return np.tensordot(w, head_probs, axes=1)


def aggregate(model: MultiHeadModel, weights, x) -> np.ndarray:
    w = _weights_array(weights)
    if w.size != model.n_heads:
        raise ValueError(f"{w.size} weights for {model.n_heads} heads")
    return combine(head_probabilities(model, x), w)


def consistency_loss(a, b) -> float | ad.Tensor:
    """Negative cosine similarity; returns a graph node when given tensors."""
    if isinstance(a, ad.Tensor) or isinstance(b, ad.Tensor):
        num = ad.dot(a, b)
        den = ad.mul(ad.add(ad.l2_norm(a), NORM_EPS), ad.add(ad.l2_norm(b), NORM_EPS))
        return ad.neg(ad.div(num, den))
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(-np.dot(a, b) / ((np.linalg.norm(a) + NORM_EPS) * (np.linalg.norm(b) + NORM_EPS)))


def _aggregate_graph(alpha: ad.Tensor, head_probs: np.ndarray) -> ad.Tensor:
    w = ad.softmax(alpha)
    out = None
    for k in range(head_probs.shape[0]):
        term = ad.mul(ad.take(w, k), head_probs[k])
        out = term if out is None else ad.add(out, term)
    return out


def batch_consistency(alpha: ad.Tensor, probs_v1: np.ndarray, probs_v2: np.ndarray) -> ad.Tensor:
    """Mean over the batch of per-row negative cosine similarity."""
    a = _aggregate_graph(alpha, probs_v1)
    b = _aggregate_graph(alpha, probs_v2)
    num = ad.sum(ad.mul(a, b), axis=1)
    den = ad.mul(ad.add(ad.l2_norm(a, axis=1), NORM_EPS), ad.add(ad.l2_norm(b, axis=1), NORM_EPS))
    return ad.neg(ad.mean(ad.div(num, den)))


@dataclass
class AdaptResult:
    weights: AggregationWeights
    initial_weights: np.ndarray
    loss_trace: list
    weight_trace: list

    def report(self, config: AdaptConfig) -> dict:
        return {
            "initial_weights": self.initial_weights.tolist(),
            "final_weights": self.weights.w.tolist(),
            "loss_trace": list(self.loss_trace),
            "config": config.to_json(),
            "seed": config.seed,
        }


def adapt(
    model: MultiHeadModel,
    weights: AggregationWeights | None,
    test_features,
    config: AdaptConfig,
) -> AdaptResult:
    x = np.asarray(test_features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("adaptation needs a nonempty (n, d) pool of test features")
    weights = weights or AggregationWeights.uniform(model.n_heads)
    alpha = ad.tensor(weights.alpha, requires_grad=True)
    initial = weights.w.copy()
    rng = np.random.default_rng([config.seed, 2])
    losses, trace = [], [initial]
    for _ in range(config.steps):
        idx = rng.choice(x.shape[0], size=min(config.batch_size, x.shape[0]), replace=False)
        batch = x[idx]
        v1 = augment(batch, config.augmentation, rng)
        v2 = augment(batch, config.augmentation, rng)
        loss = batch_consistency(alpha, head_probabilities(model, v1), head_probabilities(model, v2))
        if not np.isfinite(loss.value):
            raise FloatingPointError("non-finite consistency loss")
        alpha.grad = np.zeros_like(alpha.value)
        ad.backward(loss)
        alpha.value = alpha.value - config.learning_rate * alpha.grad
        losses.append(float(loss.value))
        trace.append(ad.softmax(alpha.value).value)
    return AdaptResult(AggregationWeights(alpha.value.copy()), initial, losses, trace)


def predict_probs(model: MultiHeadModel, weights, x) -> np.ndarray:
    return aggregate(model, weights, x)


def predict(model: MultiHeadModel, weights, x) -> np.ndarray | int:
    probs = aggregate(model, weights, x)
    if probs.ndim == 1:
        return int(decode_batch(probs[None, :])[0])
    return decode_batch(probs)
