"""ttadc command line: generate | train | adapt-eval | sweep-lambda | head-expertise.

Exit codes: 0 ok, 2 bad config, 3 missing input, 4 non-finite numbers.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import data
from . import experiments as E
from . import model as M

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("ttadc")

REPORT_FIELDS = ["seed", "test_set", "method", "accuracy", "mean_auc", "obuchowski", "n", "weights"]
SWEEP_FIELDS = ["lambda", "seed", "test_set", "method", "accuracy", "mean_auc", "obuchowski", "n", "weights"]
SUMMARY_FIELDS = ["lambda", "test_set", "method", "n_seeds", "accuracy", "mean_auc", "obuchowski"]


class MissingInput(Exception):
    pass


def _csv_text(rows: list[dict], fields: list[str]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: repr(float(v)) if isinstance(v, (float, np.floating)) else v for k, v in r.items()})
    return buf.getvalue()


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _require(path: Path) -> Path:
    if not path.exists():
        raise MissingInput(f"missing input file: {path}")
    return path


def _setup_logging(out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(out / "ttadc.log")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(logging.INFO)


# ---------------------------------------------------------------------------
# commands


def cmd_generate(cfg: E.ExperimentConfig, seed: int, out: Path) -> None:
    sets = E.make_datasets(cfg, seed)
    for name, ds in sets.items():
        fname = name if name in ("train", "eval") else f"test_{name}"
        data.save_csv(ds, out / f"{fname}.csv")
        log.info("wrote %s (%d rows)", fname, len(ds))


def _load_set(out: Path, name: str, K: int) -> data.Dataset:
    fname = name if name in ("train", "eval") else f"test_{name}"
    return data.load_csv(_require(out / f"{fname}.csv"), K)


def cmd_train(cfg: E.ExperimentConfig, seed: int, out: Path) -> None:
    train_set = _load_set(out, "train", cfg.K)
    cfg = cfg.with_seed(seed)
    trained = E.train_models(cfg, train_set)
    M.save(trained["ttadc"], out / "checkpoint.json", cfg.train)
    _write_loss_log(out / "train_log.csv", trained["ttadc_log"])
    if "baseline" in trained:
        M.save(trained["baseline"], out / "baseline.json", cfg.train)
        _write_loss_log(out / "baseline_log.csv", trained["baseline_log"])
    final = trained["ttadc_log"][-1]["loss"] if trained["ttadc_log"] else float("nan")
    log.info("trained %d epochs, final loss %r", cfg.train.epochs, final)


def _write_loss_log(path: Path, epochs: list[dict]) -> None:
    rows = []
    for e, summary in enumerate(epochs, start=1):
        for k, loss in enumerate(summary["head_losses"], start=1):
            if not np.isfinite(loss):
                raise FloatingPointError(f"epoch {e} head {k}: non-finite loss")
            rows.append({"epoch": e, "head": k, "loss": loss})
    path.write_text(_csv_text(rows, ["epoch", "head", "loss"]))


def cmd_adapt_eval(cfg: E.ExperimentConfig, seed: int, out: Path, test: str | None = None) -> None:
    model = M.load(_require(out / "checkpoint.json"))
    baseline_path = out / "baseline.json"
    baseline = M.load(baseline_path) if baseline_path.exists() else None
    names = [test] if test else [t.name for t in cfg.test_sets]
    if not names:
        raise E.ConfigError("no test sets configured")
    cfg = cfg.with_seed(seed)
    rows, reports = [], {}
    for name in names:
        ds = _load_set(out, name, cfg.K)
        set_rows, result = E.adapt_eval(cfg, model, ds, baseline)
        rows.extend({"seed": seed, "test_set": name, **r} for r in set_rows)
        reports[name] = result.report(cfg.adapt)
        _write_json(out / f"adapt_{name}.json", reports[name])
        log.info("adapted on %s: weights %s", name, result.weights.w.round(4).tolist())
    path = out / "report.csv" if test is None else out / f"report_{test}.csv"
    path.write_text(_csv_text(rows, REPORT_FIELDS))


def cmd_sweep_lambda(cfg: E.ExperimentConfig, out: Path) -> None:
    rows = E.sweep_lambda(cfg)
    (out / "sweep.csv").write_text(_csv_text(rows, SWEEP_FIELDS))
    (out / "sweep_summary.csv").write_text(_csv_text(E.summarize(rows), SUMMARY_FIELDS))
    log.info("sweep finished: %d rows", len(rows))


def cmd_head_expertise(cfg: E.ExperimentConfig, seed: int, out: Path) -> None:
    model = M.load(_require(out / "checkpoint.json"))
    if model.n_heads != cfg.K:
        raise E.ConfigError(f"checkpoint has {model.n_heads} heads, expected {cfg.K}")
    mat = E.head_accuracy_matrix(model, E.expertise_sets(cfg, seed))
    cols = [f"dom{j}" for j in range(1, cfg.K + 1)]
    rows = [{"head": f"head{k}", **dict(zip(cols, mat[k - 1]))} for k in range(1, cfg.K + 1)]
    (out / "head_expertise.csv").write_text(_csv_text(rows, ["head", *cols]))
    best = (mat.argmax(axis=0) + 1).tolist()
    _write_json(
        out / "head_expertise.json",
        {
            "matrix": mat.tolist(),
            "best_head_per_column": best,
            "diagonal_wins": int(sum(b == j for j, b in enumerate(best, start=1))),
            "lambda": cfg.expertise_lambda,
            "seed": seed,
        },
    )


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ttadc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("generate", "train", "adapt-eval", "sweep-lambda", "head-expertise"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment JSON")
        p.add_argument("--seed", type=int, default=None, help="override the config seed(s)")
        p.add_argument("--out", default=None, help="output directory (defaults to config output_dir)")
        if name == "adapt-eval":
            p.add_argument("--test", default=None, help="evaluate a single named test set")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = E.load_config(_require(Path(args.config)))
        if args.seed is not None:
            cfg = replace(cfg, seeds=(args.seed,))
        seed = cfg.seeds[0]
        out = Path(args.out or cfg.output_dir)
        _setup_logging(out)
        log.info("%s seed=%d", args.command, seed)
        if args.command == "generate":
            cmd_generate(cfg, seed, out)
        elif args.command == "train":
            cmd_train(cfg, seed, out)
        elif args.command == "adapt-eval":
            cmd_adapt_eval(cfg, seed, out, args.test)
        elif args.command == "sweep-lambda":
            cmd_sweep_lambda(cfg, out)
        else:
            cmd_head_expertise(cfg, seed, out)
    except E.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingInput as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_MISSING
    except FloatingPointError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
