"""Synthetic ordinal datasets with controllable class priors.

Every class has a fixed Gaussian feature distribution, so changing the label
distribution changes p(y) and nothing else.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .ordinal import LabelDistribution

LAYOUTS = ("ordinal", "scattered")


@dataclass(frozen=True)
class GeneratorSpec:
    K: int = 5
    d: int = 8
    separation: float = 1.0
    noise: float = 1.25
    distribution: tuple = (0.2, 0.2, 0.2, 0.2, 0.2)
    n: int = 1000
    seed: int = 0
    offset: float = 2.0
    layout: str = "ordinal"

    def __post_init__(self):
        if self.K < 2 or self.d < 1:
            raise ValueError(f"need K >= 2 and d >= 1, got K={self.K}, d={self.d}")
        if self.separation <= 0 or self.noise <= 0:
            raise ValueError("separation and noise must be positive")
        if self.offset < 0:
            raise ValueError("offset must be nonnegative")
        if self.layout not in LAYOUTS:
            raise ValueError(f"layout must be one of {LAYOUTS}, got {self.layout!r}")
        if self.n < self.K:
            raise ValueError(f"n={self.n} must be at least K={self.K}")
        dist = LabelDistribution(tuple(self.distribution))
        if dist.K != self.K:
            raise ValueError(f"distribution has {dist.K} classes, expected {self.K}")
        object.__setattr__(self, "distribution", dist.probs)


@dataclass(frozen=True)
class AugmentationSpec:
    noise: float = 1.0
    jitter: float = 0.0
    dropout: float = 0.0

    def __post_init__(self):
        if self.noise < 0 or self.jitter < 0:
            raise ValueError("augmentation strengths must be nonnegative")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    K: int
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.shape[0]:
            raise ValueError(
                f"features {self.features.shape} and labels {self.labels.shape} disagree"
            )
        if self.labels.size and (self.labels.min() < 1 or self.labels.max() > self.K):
            raise ValueError(f"labels outside 1..{self.K}")

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels - 1, minlength=self.K)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx], self.K, dict(self.provenance))


def class_counts(dist, n: int) -> np.ndarray:
    """Largest-remainder apportionment of ``n`` samples; ties go to lower classes."""
    p = np.asarray(dist.probs if isinstance(dist, LabelDistribution) else dist, dtype=np.float64)
    quota = p * n
    counts = np.floor(quota).astype(int)
    remainder = quota - counts
    short = n - counts.sum()
    # stable sort on -remainder keeps lower index first on ties
    order = np.argsort(-remainder, kind="stable")
    counts[order[:short]] += 1
    return counts


def class_means(K: int, d: int, separation: float, offset: float, layout: str = "ordinal") -> np.ndarray:
    """Class c sits at c*separation along axis 0 plus an offset orthogonal to it.

    ``ordinal`` offsets grow as c*offset*separation along axis 1, keeping the
    means on one line so every ordinal threshold is a half-space.
    ``scattered`` puts each class's offset on its own axis.
    """
    means = np.zeros((K, d))
    classes = np.arange(1, K + 1)
    means[:, 0] = separation * classes
    if d == 1 or offset == 0:
        return means
    if layout == "ordinal":
        means[:, 1] = offset * separation * classes
    else:
        for c in range(K):
            means[c, 1 + c % (d - 1)] += offset * separation
    return means


def _sample_classes(counts, means, noise, rng) -> tuple[np.ndarray, np.ndarray]:
    labels = np.repeat(np.arange(1, len(counts) + 1), counts)
    features = means[labels - 1] + noise * rng.standard_normal((labels.size, means.shape[1]))
    perm = rng.permutation(labels.size)
    return features[perm], labels[perm]


def generate(spec: GeneratorSpec) -> Dataset:
    rng = np.random.default_rng(spec.seed)
    means = class_means(spec.K, spec.d, spec.separation, spec.offset, spec.layout)
    counts = class_counts(spec.distribution, spec.n)
    x, y = _sample_classes(counts, means, spec.noise, rng)
    return Dataset(x, y, spec.K, {"generator": asdict(spec)})


def resample(
    dataset: Dataset,
    target,
    n: int,
    seed: int,
    replace: bool | None = None,
) -> Dataset:
    """Draw ``n`` rows whose class counts follow ``target``.

    Without ``replace``, a class is drawn with replacement only when it has
    fewer rows than requested.
    """
    dist = target if isinstance(target, LabelDistribution) else LabelDistribution(tuple(target))
    if dist.K != dataset.K:
        raise ValueError(f"target has {dist.K} classes, dataset has {dataset.K}")
    rng = np.random.default_rng(seed)
    counts = class_counts(dist, n)
    picks = []
    for c, want in enumerate(counts, start=1):
        if want == 0:
            continue
        pool = np.flatnonzero(dataset.labels == c)
        if pool.size == 0:
            raise ValueError(f"target puts mass on class {c}, which is absent from the source")
        with_repl = replace if replace is not None else want > pool.size
        if not with_repl and want > pool.size:
            raise ValueError(f"class {c}: {want} requested, only {pool.size} available")
        picks.append(rng.choice(pool, size=want, replace=with_repl))
    idx = rng.permutation(np.concatenate(picks))
    out = dataset.subset(idx)
    out.provenance = {
        "source": dataset.provenance,
        "resample": {"target": list(dist.probs), "n": n, "seed": seed, "replace": replace},
    }
    return out


def augment(x, spec: AugmentationSpec, rng: np.random.Generator) -> np.ndarray:
    """One random view of ``x`` (a vector or a batch of rows)."""
    x = np.asarray(x, dtype=np.float64)
    v = x
    if spec.jitter > 0:
        v = v * rng.uniform(1.0 - spec.jitter, 1.0 + spec.jitter, size=x.shape)
    if spec.dropout > 0:
        v = v * (rng.random(x.shape) >= spec.dropout)
    if spec.noise > 0:
        v = v + spec.noise * rng.standard_normal(x.shape)
    return v


# ---------------------------------------------------------------------------
# CSV io


def to_csv(dataset: Dataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"f{i + 1}" for i in range(dataset.d)] + ["label"])
    for row, label in zip(dataset.features, dataset.labels):
        writer.writerow([repr(float(v)) for v in row] + [int(label)])
    return buf.getvalue()


def save_csv(dataset: Dataset, path) -> None:
    path = Path(path)
    path.write_text(to_csv(dataset))
    sidecar = path.with_suffix(".json")
    sidecar.write_text(json.dumps({"K": dataset.K, **dataset.provenance}, indent=2, sort_keys=True))


def load_csv(path, K: int | None = None) -> Dataset:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[-1] != "label":
            raise ValueError(f"{path}: last column must be 'label'")
        rows = [r for r in reader if r]
    features = np.array([[float(v) for v in r[:-1]] for r in rows], dtype=np.float64)
    labels = np.array([int(r[-1]) for r in rows], dtype=int)
    provenance = {}
    sidecar = path.with_suffix(".json")
    if sidecar.exists():
        provenance = json.loads(sidecar.read_text())
        K = K or provenance.get("K")
    return Dataset(features.reshape(len(rows), len(header) - 1), labels, K or int(labels.max()), provenance)
