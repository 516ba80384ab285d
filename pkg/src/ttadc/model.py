"""Shared-trunk network with K independently parameterized ordinal heads."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .calibration import HeadSpec, calibrated_bce
from .ordinal import LabelDistribution, encode_batch, positive_rates, uniform_rates

HEAD_MODES = ("calibrated", "uncalibrated", "uniform")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    batch_size: int = 32
    learning_rate: float = 1e-2
    weight_decay: float = 0.0
    lam: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ValueError("learning_rate and weight_decay must be nonnegative")
        if self.lam < 1:
            raise ValueError(f"lambda must be >= 1, got {self.lam}")


Layer = tuple  # (weight Tensor, bias Tensor)


@dataclass
class MultiHeadModel:
    K: int
    d: int
    hidden: tuple
    head_hidden: int
    trunk: list
    heads: list
    head_specs: list
    mode: str = "calibrated"
    seed: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n_heads(self) -> int:
        return len(self.heads)

    def parameters(self) -> list[ad.Tensor]:
        out = [t for layer in self.trunk for t in layer]
        for head in self.heads:
            out.extend(t for layer in head for t in layer)
        return out

    def head_parameters(self, k: int) -> list[ad.Tensor]:
        return [t for layer in self.heads[k - 1] for t in layer]

    def snapshot(self) -> list[np.ndarray]:
        return [p.value.copy() for p in self.parameters()]

    def zero_grad(self) -> None:
        ad.zero_grad(self.parameters())


def _glorot_layer(rng: np.random.Generator, fan_in: int, fan_out: int) -> tuple:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
    return ad.tensor(w, requires_grad=True), ad.tensor(np.zeros(fan_out), requires_grad=True)


def _head_specs(mode: str, K: int, lam: float, train_rates: np.ndarray) -> list[HeadSpec]:
    if mode == "calibrated":
        return [HeadSpec.dominating(k, lam, train_rates) for k in range(1, K + 1)]
    if mode == "uncalibrated":
        return [HeadSpec.uncalibrated(1, train_rates)]
    if mode == "uniform":
        return [HeadSpec.build(k, uniform_rates(K), train_rates, lam=1.0) for k in range(1, K + 1)]
    raise ValueError(f"unknown head mode {mode!r}; expected one of {HEAD_MODES}")


def init(
    K: int,
    d: int,
    train_rates,
    lam: float = 2.0,
    hidden: tuple = (64, 32),
    head_hidden: int = 16,
    seed: int = 0,
    mode: str = "calibrated",
    shared_head_init: bool = True,
) -> MultiHeadModel:
    """Build a model whose head k is calibrated toward the k-dominating prior.

    ``train_rates`` are the training-set positive rates, or a
    LabelDistribution they are derived from. ``mode="uncalibrated"`` gives
    the single-head baseline and ``mode="uniform"`` K heads all calibrated
    to the uniform prior, trained under the same averaged loss. With ``shared_head_init`` every head starts from the
    same draw, so heads differ only through their compensating terms.
    """
    if K < 2 or d < 1:
        raise ValueError(f"need K >= 2 and d >= 1, got K={K}, d={d}")
    if isinstance(train_rates, LabelDistribution):
        train_rates = positive_rates(train_rates)
    train_rates = np.asarray(train_rates, dtype=np.float64)
    if train_rates.shape != (K - 1,):
        raise ValueError(f"expected {K - 1} training rates, got {train_rates.shape}")
    specs = _head_specs(mode, K, lam, train_rates)

    rng = np.random.default_rng(seed)
    dims = (d, *hidden)
    trunk = [_glorot_layer(rng, a, b) for a, b in zip(dims[:-1], dims[1:])]

    def new_head():
        return [
            _glorot_layer(rng, dims[-1], head_hidden),
            _glorot_layer(rng, head_hidden, K - 1),
        ]

    if shared_head_init:
        proto = new_head()
        heads = [
            [tuple(ad.tensor(t.value, requires_grad=True) for t in layer) for layer in proto]
            for _ in specs
        ]
    else:
        heads = [new_head() for _ in specs]
    return MultiHeadModel(
        K=K,
        d=d,
        hidden=tuple(hidden),
        head_hidden=head_hidden,
        trunk=trunk,
        heads=heads,
        head_specs=specs,
        mode=mode,
        seed=seed,
        meta={"lambda": lam, "shared_head_init": shared_head_init},
    )


def _dense(x: ad.Tensor, layer: Layer) -> ad.Tensor:
    w, b = layer
    return ad.add_rowwise(ad.matmul(x, w), b)


def forward(model: MultiHeadModel, x) -> list[ad.Tensor]:
    """Per-head logits. A batch (n, d) gives K tensors of shape (n, K-1)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    batch = x[None, :] if single else x
    if batch.ndim != 2 or batch.shape[1] != model.d:
        raise ValueError(f"input width {batch.shape[-1]} does not match model width {model.d}")
    h = ad.tensor(batch)
    for layer in model.trunk:
        h = ad.tanh(_dense(h, layer))
    outs = []
    for head in model.heads:
        z = ad.tanh(_dense(h, head[0]))
        logits = _dense(z, head[1])
        outs.append(ad.tensor(logits.value[0]) if single else logits)
    return outs


def head_probabilities(model: MultiHeadModel, x) -> np.ndarray:
    """sigmoid(logits) for all heads: shape (n_heads, n, K-1), or (n_heads, K-1)."""
    return np.stack([ad.sigmoid(t).value for t in forward(model, x)])


def predict_head(model: MultiHeadModel, k: int, x) -> np.ndarray:
    if not 1 <= k <= model.n_heads:
        raise ValueError(f"head {k} outside 1..{model.n_heads}")
    return head_probabilities(model, x)[k - 1]


def batch_loss(model: MultiHeadModel, x: np.ndarray, y: np.ndarray) -> tuple[ad.Tensor, list[float]]:
    """Head-averaged calibrated loss on a minibatch, plus per-head values."""
    targets = encode_batch(y, model.K)
    losses = [
        calibrated_bce(logits, targets, spec)
        for logits, spec in zip(forward(model, x), model.head_specs)
    ]
    total = losses[0]
    for term in losses[1:]:
        total = ad.add(total, term)
    total = ad.mul(total, 1.0 / len(losses))
    return total, [float(t.value) for t in losses]


def sgd_step(params, learning_rate: float, weight_decay: float = 0.0) -> None:
    for p in params:
        p.value = p.value - learning_rate * (p.grad + weight_decay * p.value)


def train_epoch(model: MultiHeadModel, dataset, config: TrainConfig, rng: np.random.Generator) -> dict:
    """One shuffled pass of minibatch SGD; returns sample-weighted mean losses."""
    n = len(dataset)
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    order = rng.permutation(n)
    params = model.parameters()
    total = 0.0
    per_head = np.zeros(model.n_heads)
    for start in range(0, n, config.batch_size):
        idx = order[start : start + config.batch_size]
        model.zero_grad()
        loss, head_losses = batch_loss(model, dataset.features[idx], dataset.labels[idx])
        if not np.isfinite(loss.value):
            raise FloatingPointError("non-finite training loss")
        ad.backward(loss)
        sgd_step(params, config.learning_rate, config.weight_decay)
        total += float(loss.value) * idx.size
        per_head += np.asarray(head_losses) * idx.size
    return {"loss": total / n, "head_losses": (per_head / n).tolist()}


def fit(model: MultiHeadModel, dataset, config: TrainConfig) -> list[dict]:
    rng = np.random.default_rng([config.seed, 1])
    return [train_epoch(model, dataset, config, rng) for _ in range(config.epochs)]


def build_and_train(dataset, config: TrainConfig, mode: str = "calibrated", **kwargs) -> tuple[MultiHeadModel, list[dict]]:
    """Init from the dataset's empirical label rates, then fit."""
    from .ordinal import empirical_distribution

    rates = positive_rates(empirical_distribution(dataset.labels, dataset.K))
    model = init(dataset.K, dataset.d, rates, lam=config.lam, seed=config.seed, mode=mode, **kwargs)
    return model, fit(model, dataset, config)


# ---------------------------------------------------------------------------
# checkpoints


def to_json(model: MultiHeadModel, train_config: TrainConfig | None = None) -> dict:
    return {
        "K": model.K,
        "d": model.d,
        "hidden": list(model.hidden),
        "head_hidden": model.head_hidden,
        "mode": model.mode,
        "seed": model.seed,
        "meta": model.meta,
        "layer_shapes": [list(p.shape) for p in model.parameters()],
        "trunk": [[t.value.ravel().tolist() for t in layer] for layer in model.trunk],
        "heads": [[[t.value.ravel().tolist() for t in layer] for layer in head] for head in model.heads],
        "head_specs": [s.to_json() for s in model.head_specs],
        "train_config": None if train_config is None else asdict(train_config),
    }


def from_json(obj: dict) -> MultiHeadModel:
    K, d = int(obj["K"]), int(obj["d"])
    hidden = tuple(obj["hidden"])
    head_hidden = int(obj["head_hidden"])
    dims = (d, *hidden)

    def layer(flat, fan_in, fan_out):
        w, b = flat
        return (
            ad.tensor(np.array(w).reshape(fan_in, fan_out), requires_grad=True),
            ad.tensor(np.array(b), requires_grad=True),
        )

    trunk = [layer(f, a, b) for f, a, b in zip(obj["trunk"], dims[:-1], dims[1:])]
    heads = [
        [layer(h[0], dims[-1], head_hidden), layer(h[1], head_hidden, K - 1)]
        for h in obj["heads"]
    ]
    return MultiHeadModel(
        K=K,
        d=d,
        hidden=hidden,
        head_hidden=head_hidden,
        trunk=trunk,
        heads=heads,
        head_specs=[HeadSpec.from_json(s) for s in obj["head_specs"]],
        mode=obj.get("mode", "calibrated"),
        seed=int(obj.get("seed", 0)),
        meta=obj.get("meta", {}),
    )


def save(model: MultiHeadModel, path, train_config: TrainConfig | None = None) -> None:
    Path(path).write_text(json.dumps(to_json(model, train_config), indent=1))


def load(path) -> MultiHeadModel:
    return from_json(json.loads(Path(path).read_text()))
