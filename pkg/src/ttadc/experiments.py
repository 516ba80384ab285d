"""Experiment recipes shared by the CLI and the acceptance suite."""
from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import data, metrics
from . import model as M
from . import tta
from .ordinal import DominatingSpec, LabelDistribution, dominating_distribution

DEFAULT_TRAIN = (0.40, 0.25, 0.15, 0.12, 0.08)

# seed-derivation tags; changing them changes every generated dataset
_TAG_TRAIN, _TAG_EVAL, _TAG_TEST, _TAG_EXPERT = 11, 12, 13, 14


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


def derive_seed(seed: int, *tags: int) -> int:
    return int(np.random.SeedSequence([seed, *tags]).generate_state(1)[0])


@dataclass(frozen=True)
class TestSetSpec:
    name: str
    distribution: tuple
    n: int = 1000

    @classmethod
    def dominating(cls, j: int, lam: float, K: int, n: int = 1000) -> "TestSetSpec":
        dist = dominating_distribution(DominatingSpec(j=j, lam=lam, K=K))
        return cls(f"dom{j}", dist.probs, n)


@dataclass(frozen=True)
class ExperimentConfig:
    K: int = 5
    d: int = 8
    separation: float = 1.0
    noise: float = 1.25
    offset: float = 2.0
    layout: str = "ordinal"
    train_distribution: tuple = DEFAULT_TRAIN
    n_train: int = 4000
    n_eval: int = 1000
    test_sets: tuple = ()
    train: M.TrainConfig = field(default_factory=M.TrainConfig)
    adapt: tta.AdaptConfig = field(default_factory=tta.AdaptConfig)
    lambda_grid: tuple = (1.0, 2.0, 4.0, 8.0)
    seeds: tuple = (0, 1, 2, 3, 4)
    expertise_lambda: float = 2.0
    n_expertise: int = 2000
    train_baseline: bool = True
    output_dir: str = "runs/default"

    def generator(self, distribution, n: int, seed: int) -> data.GeneratorSpec:
        return data.GeneratorSpec(
            K=self.K,
            d=self.d,
            separation=self.separation,
            noise=self.noise,
            distribution=tuple(distribution),
            n=n,
            seed=seed,
            offset=self.offset,
            layout=self.layout,
        )

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(
            self,
            train=replace(self.train, seed=seed),
            adapt=replace(self.adapt, seed=seed),
        )

    def to_json(self) -> dict:
        out = asdict(self)
        out["test_sets"] = [asdict(t) for t in self.test_sets]
        return out


def default_test_sets(K: int = 5, lam: float = 2.0, n: int = 1000) -> tuple:
    """Reverse skew plus one-dominating sets at the low, middle and high class."""
    reverse = TestSetSpec("reverse", tuple(reversed(DEFAULT_TRAIN)), n) if K == 5 else None
    doms = tuple(TestSetSpec.dominating(j, lam, K, n) for j in sorted({1, (K + 1) // 2, K}))
    return ((reverse,) if reverse else ()) + doms


def default_config(**overrides) -> ExperimentConfig:
    cfg = ExperimentConfig(test_sets=default_test_sets())
    return replace(cfg, **overrides)


# ---------------------------------------------------------------------------
# config parsing


def _distribution(value, K: int, where: str) -> tuple:
    try:
        arr = np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: not a list of numbers") from exc
    if arr.shape != (K,):
        raise ConfigError(f"{where}: expected {K} probabilities, got {arr.size}")
    if np.any(arr < 0) or abs(arr.sum() - 1.0) > 1e-6:
        raise ConfigError(f"{where}: probabilities must be nonnegative and sum to 1")
    return LabelDistribution.normalized(arr).probs


def _positive_int(value, where: str, minimum: int = 1) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
        raise ConfigError(f"{where}: expected an integer >= {minimum}, got {value!r}")
    return value


def config_from_dict(obj: dict) -> ExperimentConfig:
    if not isinstance(obj, dict):
        raise ConfigError("config root must be a JSON object")
    gen = obj.get("generator", {})
    K = _positive_int(gen.get("K", 5), "generator.K", 2)
    d = _positive_int(gen.get("d", 8), "generator.d")
    train = obj.get("train", {})
    ev = obj.get("eval", {})

    tests = []
    for i, t in enumerate(obj.get("test_sets", [])):
        where = f"test_sets[{i}]"
        n = _positive_int(t.get("n", 1000), f"{where}.n", K)
        if "dominating" in t:
            j = _positive_int(t["dominating"], f"{where}.dominating")
            if j > K:
                raise ConfigError(f"{where}.dominating: class {j} outside 1..{K}")
            lam = float(t.get("lambda", 2.0))
            if lam < 1:
                raise ConfigError(f"{where}.lambda: must be >= 1")
            spec = TestSetSpec.dominating(j, lam, K, n)
            tests.append(replace(spec, name=t.get("name", spec.name)))
        elif "distribution" in t:
            if "name" not in t:
                raise ConfigError(f"{where}: a name is required")
            tests.append(TestSetSpec(t["name"], _distribution(t["distribution"], K, f"{where}.distribution"), n))
        else:
            raise ConfigError(f"{where}: needs 'distribution' or 'dominating'")
    names = [t.name for t in tests]
    if len(set(names)) != len(names):
        raise ConfigError("test_sets: names must be unique")

    tc = obj.get("train_config", {})
    ac = obj.get("adapt_config", {})
    try:
        train_cfg = M.TrainConfig(
            epochs=int(tc.get("epochs", 40)),
            batch_size=int(tc.get("batch_size", 32)),
            learning_rate=float(tc.get("learning_rate", 1e-2)),
            weight_decay=float(tc.get("weight_decay", 0.0)),
            lam=float(tc.get("lambda", 2.0)),
        )
        adapt_cfg = tta.AdaptConfig(
            steps=int(ac.get("steps", 200)),
            batch_size=int(ac.get("batch_size", 32)),
            learning_rate=float(ac.get("learning_rate", 50.0)),
            augmentation=data.AugmentationSpec(**ac.get("augmentation", {})),
        )
        cfg = ExperimentConfig(
            K=K,
            d=d,
            separation=float(gen.get("separation", 1.0)),
            noise=float(gen.get("noise", 1.25)),
            offset=float(gen.get("offset", 2.0)),
            layout=str(gen.get("layout", "ordinal")),
            train_distribution=_distribution(
                train.get("distribution", DEFAULT_TRAIN if K == 5 else [1.0 / K] * K),
                K,
                "train.distribution",
            ),
            n_train=_positive_int(train.get("n", 4000), "train.n", K),
            n_eval=_positive_int(ev.get("n", 1000), "eval.n", K),
            test_sets=tuple(tests),
            train=train_cfg,
            adapt=adapt_cfg,
            lambda_grid=tuple(float(v) for v in obj.get("lambda_grid", [1, 2, 4, 8])),
            seeds=tuple(int(s) for s in obj.get("seeds", [0])),
            expertise_lambda=float(obj.get("expertise_lambda", 2.0)),
            n_expertise=_positive_int(obj.get("n_expertise", 2000), "n_expertise", K),
            train_baseline=bool(obj.get("train_baseline", True)),
            output_dir=str(obj.get("output_dir", "runs/default")),
        )
        cfg.generator(cfg.train_distribution, cfg.n_train, 0)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    if not cfg.seeds:
        raise ConfigError("seeds: at least one seed is required")
    if not cfg.lambda_grid or min(cfg.lambda_grid) < 1:
        raise ConfigError("lambda_grid: must be nonempty with every lambda >= 1")
    return cfg


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return config_from_dict(obj)


# ---------------------------------------------------------------------------
# datasets


def make_datasets(cfg: ExperimentConfig, seed: int) -> dict[str, data.Dataset]:
    """Train, eval (train prior) and every named test set for one seed."""
    out = {
        "train": data.generate(cfg.generator(cfg.train_distribution, cfg.n_train, derive_seed(seed, _TAG_TRAIN))),
        "eval": data.generate(cfg.generator(cfg.train_distribution, cfg.n_eval, derive_seed(seed, _TAG_EVAL))),
    }
    for i, t in enumerate(cfg.test_sets):
        out[t.name] = data.generate(cfg.generator(t.distribution, t.n, derive_seed(seed, _TAG_TEST, i)))
    return out


def expertise_sets(cfg: ExperimentConfig, seed: int) -> list[data.Dataset]:
    return [
        data.generate(
            cfg.generator(
                dominating_distribution(DominatingSpec(j, cfg.expertise_lambda, cfg.K)).probs,
                cfg.n_expertise,
                derive_seed(seed, _TAG_EXPERT, j),
            )
        )
        for j in range(1, cfg.K + 1)
    ]


# ---------------------------------------------------------------------------
# evaluation


def evaluate_probs(probs: np.ndarray, dataset: data.Dataset) -> metrics.MetricsReport:
    from .ordinal import decode_batch

    return metrics.evaluate(dataset.labels, decode_batch(probs), metrics.ordinal_score(probs), dataset.K)


def evaluate_weights(model: M.MultiHeadModel, weights, dataset: data.Dataset) -> metrics.MetricsReport:
    return evaluate_probs(tta.aggregate(model, weights, dataset.features), dataset)


def train_models(cfg: ExperimentConfig, train_set: data.Dataset, lam: float | None = None) -> dict:
    tc = cfg.train if lam is None else replace(cfg.train, lam=lam)
    out = {}
    out["ttadc"], out["ttadc_log"] = M.build_and_train(train_set, tc, mode="calibrated")
    if cfg.train_baseline:
        out["baseline"], out["baseline_log"] = M.build_and_train(train_set, tc, mode="uncalibrated")
    return out


def adapt_eval(
    cfg: ExperimentConfig,
    model: M.MultiHeadModel,
    dataset: data.Dataset,
    baseline: M.MultiHeadModel | None = None,
) -> tuple[list[dict], tta.AdaptResult]:
    """Rows for baseline (if given), uniform aggregation and adapted aggregation."""
    rows = []
    if baseline is not None:
        rep = evaluate_weights(baseline, tta.AggregationWeights.uniform(baseline.n_heads), dataset)
        rows.append(_row("baseline", rep, np.ones(1)))
    uniform = tta.AggregationWeights.uniform(model.n_heads)
    rows.append(_row("uniform_weights", evaluate_weights(model, uniform, dataset), uniform.w))
    result = tta.adapt(model, uniform, dataset.features, cfg.adapt)
    rows.append(_row("ttadc", evaluate_weights(model, result.weights, dataset), result.weights.w))
    for r in rows:
        check_finite(r)
    return rows, result


def _row(method: str, rep: metrics.MetricsReport, w: np.ndarray) -> dict:
    return {
        "method": method,
        "accuracy": rep.accuracy,
        "mean_auc": rep.mean_auc,
        "obuchowski": rep.obuchowski,
        "n": rep.n,
        "weights": ";".join(repr(float(v)) for v in w),
    }


def check_finite(row: dict) -> None:
    for key in ("accuracy", "mean_auc", "obuchowski"):
        if not np.isfinite(row[key]):
            raise FloatingPointError(f"{key} is not finite for method {row['method']}")


def head_accuracy_matrix(model: M.MultiHeadModel, sets: list[data.Dataset]) -> np.ndarray:
    """Entry (k, j): accuracy of head k on the j-dominating set."""
    from .ordinal import decode_batch

    mat = np.zeros((model.n_heads, len(sets)))
    for j, ds in enumerate(sets):
        probs = M.head_probabilities(model, ds.features)
        for k in range(model.n_heads):
            mat[k, j] = metrics.accuracy(ds.labels, decode_batch(probs[k]))
    return mat


def run_seed(cfg: ExperimentConfig, seed: int, lam: float | None = None) -> list[dict]:
    """Full benchmark for one seed: train, then adapt-eval on eval and every test set."""
    cfg = cfg.with_seed(seed)
    sets = make_datasets(cfg, seed)
    trained = train_models(cfg, sets["train"], lam)
    rows = []
    for name in ["eval", *(t.name for t in cfg.test_sets)]:
        set_rows, _ = adapt_eval(cfg, trained["ttadc"], sets[name], trained.get("baseline"))
        for r in set_rows:
            rows.append({"seed": seed, "lambda": lam if lam is not None else cfg.train.lam, "test_set": name, **r})
    return rows


def sweep_lambda(cfg: ExperimentConfig, threads: int | None = None) -> list[dict]:
    """Long-format rows over lambda x seed, in grid order regardless of threading.

    Each cell also trains a reference whose heads are all calibrated to the
    uniform prior, so the lambda = 1 rows can be compared against it directly.
    """
    threads = threads or int(os.environ.get("TTADC_THREADS", "1"))
    cells = [(lam, seed) for lam in cfg.lambda_grid for seed in cfg.seeds]
    uniform_cfg = replace(cfg, train_baseline=False)

    def cell(args):
        lam, seed = args
        scfg = uniform_cfg.with_seed(seed)
        sets = make_datasets(scfg, seed)
        tc = replace(scfg.train, lam=lam)
        ttadc, _ = M.build_and_train(sets["train"], tc, mode="calibrated")
        ref, _ = M.build_and_train(sets["train"], tc, mode="uniform")
        rows = []
        for name in ["eval", *(t.name for t in scfg.test_sets)]:
            set_rows, _ = adapt_eval(scfg, ttadc, sets[name])
            uniform = tta.AggregationWeights.uniform(ref.n_heads)
            set_rows.append(_row("uniform_calibration", evaluate_weights(ref, uniform, sets[name]), uniform.w))
            for r in set_rows:
                rows.append({"lambda": lam, "seed": seed, "test_set": name, **r})
        return rows

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(cell, cells))
    else:
        results = [cell(c) for c in cells]
    return [r for rows in results for r in rows]


def summarize(rows: list[dict], keys: tuple = ("lambda", "test_set", "method")) -> list[dict]:
    """Mean over seeds of accuracy, mean AUC and OI, grouped by ``keys``."""
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in keys), []).append(r)
    out = []
    for key, members in groups.items():
        out.append(
            {
                **dict(zip(keys, key)),
                "n_seeds": len(members),
                "accuracy": float(np.mean([m["accuracy"] for m in members])),
                "mean_auc": float(np.mean([m["mean_auc"] for m in members])),
                "obuchowski": float(np.mean([m["obuchowski"] for m in members])),
            }
        )
    return out
