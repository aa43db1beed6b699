"""``tnt`` command line: train, sweep, ensemble, export-dot, synth.

Exit status: 0 success, 2 bad arguments, 3 data/model-file errors,
4 training failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .cart import CartConfig
from .dataset import (
    DataError,
    Dataset,
    load_csv,
    load_libsvm,
    make_corners_synthetic,
    pad_features,
    train_test_split,
    write_libsvm,
)
from .ensemble import (
    AdaBoostModel,
    c_range_for,
    ensemble_from_dict,
    ensemble_to_json,
    fit_adaboost,
    fit_bagging,
    fit_learner,
    per_estimator_budget,
    tune_c_for_budget,
    with_c,
)
from .graph import (
    GraphError,
    avg_path_length,
    from_dict,
    leaf_count,
    merge_equivalent_leaves,
    split_count,
    to_dot,
    to_json,
)
from .ndg import NdgConfig
from .tnt import TnTConfig

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TRAIN = 0, 2, 3, 4

DEFAULT_C = {"tnt": 1e-3, "ndg": 3e-4, "cart": 0.0}


class UsageError(Exception):
    pass


class TrainingError(Exception):
    pass


def _resolve_seed(seed: int | None) -> int:
    if seed is not None:
        return seed
    env = os.environ.get("TNT_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"TNT_SEED must be an integer, got {env!r}") from None


def _load(path: str, fmt: str, label_column: str, header: bool, label_map=None) -> Dataset:
    if fmt == "csv":
        return load_csv(path, label_column, header=header, label_map=label_map)
    return load_libsvm(path, label_map=label_map)


def _load_split(args, seed: int) -> tuple[Dataset, Dataset | None]:
    train = _load(args.data, args.format, args.label_column, not args.no_header)
    if args.test:
        test = _load(args.test, args.format, args.label_column, not args.no_header, train.label_map)
        if test.n_classes != train.n_classes:
            raise DataError("test file label set disagrees with the training file")
        k = max(train.n_features, test.n_features)
        return pad_features(train, k), pad_features(test, k)
    if args.test_frac is not None:
        if not 0.0 < args.test_frac < 1.0:
            raise UsageError(f"--test-frac must lie in (0, 1), got {args.test_frac}")
        return train_test_split(train, args.test_frac, seed)
    return train, None


def _learner(algo: str, args, seed: int, C: float | None = None):
    try:
        return _make_learner(algo, args, seed, C)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _make_learner(algo: str, args, seed: int, C: float | None):
    C = args.c if C is None and args.c is not None else C
    if C is None:
        C = DEFAULT_C[algo]
    if algo == "tnt":
        return TnTConfig(C=C, N1=args.n1, N2=args.n2, fine_tune_rounds=args.fine_tune_rounds,
                         seed=seed, tie_break=args.tie_break,
                         prune_after_fine_tune=not args.no_prune_after_fine_tune)
    if algo == "ndg":
        return NdgConfig(C=C, max_iterations=args.max_iterations, seed=seed, tie_break=args.tie_break)
    if args.max_splits is not None:
        return CartConfig(mode="best_first", max_splits=args.max_splits, seed=seed, tie_break=args.tie_break)
    return CartConfig(mode="depth_first", ccp_alpha=C, seed=seed, tie_break=args.tie_break)


def _accuracy(model, ds: Dataset | None) -> float | None:
    if ds is None:
        return None
    return float(np.mean(model.predict(ds.features) == ds.labels))


def _config_dict(cfg) -> dict:
    return {"kind": type(cfg).__name__, **vars(cfg)}


def _flags(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func"}


def _write(path: str | None, text: str):
    if path:
        Path(path).write_text(text)


def _graph_report(g, train: Dataset, test: Dataset | None) -> dict:
    mean, std = avg_path_length(g, test if test is not None else train)
    return {
        "split_count": split_count(g),
        "leaf_count": leaf_count(g),
        "leaf_count_merged": leaf_count(merge_equivalent_leaves(g)),
        "train_accuracy": _accuracy(g, train),
        "test_accuracy": _accuracy(g, test),
        "path_length_mean": mean,
        "path_length_std": std,
    }


def _dataset_stats(ds: Dataset) -> dict:
    return {"m": ds.n_samples, "k": ds.n_features, "K": ds.n_classes}


def _fmt(v) -> str:
    return "-" if v is None else f"{v:.4f}"


def cmd_train(args) -> int:
    seed = _resolve_seed(args.seed)
    train, test = _load_split(args, seed)
    cfg = _learner(args.algo, args, seed)
    t0 = time.perf_counter()
    try:
        g = fit_learner(train, cfg)
    except (ValueError, RuntimeError, MemoryError) as exc:
        raise TrainingError(str(exc)) from exc
    elapsed = time.perf_counter() - t0
    _write(args.out, to_json(g))
    report = {"command": "train", "model": args.algo, "hyperparameters": _config_dict(cfg),
              "dataset": _dataset_stats(train), "test_size": None if test is None else test.n_samples,
              **_graph_report(g, train, test), "wall_time_s": elapsed, "seed": seed, "flags": _flags(args)}
    _write(args.report, json.dumps(report, indent=1))
    print(f"{args.algo}: splits={report['split_count']} leaves={report['leaf_count']}"
          f" (merged {report['leaf_count_merged']}) train={_fmt(report['train_accuracy'])}"
          f" test={_fmt(report['test_accuracy'])} path={report['path_length_mean']:.2f}"
          f"+-{report['path_length_std']:.2f} time={elapsed:.2f}s")
    return EXIT_OK


def cmd_sweep(args) -> int:
    seed = _resolve_seed(args.seed)
    default = c_range_for(args.dataset_name or Path(args.data).name)
    c_min = default[0] if args.c_min is None else args.c_min
    c_max = default[1] if args.c_max is None else args.c_max
    if not 0 < c_min <= c_max:
        raise UsageError(f"need 0 < c-min <= c-max, got {c_min} and {c_max}")
    if args.grid < 1:
        raise UsageError("--grid must be at least 1")
    train, test = _load_split(args, seed)
    base = _learner(args.algo, args, seed, C=c_min)
    rows = []
    for c in np.geomspace(c_min, c_max, args.grid):
        t0 = time.perf_counter()
        try:
            g = fit_learner(train, with_c(base, float(c)))
        except (ValueError, RuntimeError, MemoryError) as exc:
            raise TrainingError(str(exc)) from exc
        elapsed = time.perf_counter() - t0
        mean, _ = avg_path_length(g, test if test is not None else train)
        rows.append({"C": float(c), "splits": split_count(g), "train_acc": _accuracy(g, train),
                     "test_acc": _accuracy(g, test), "avg_path_len": mean, "time": elapsed})
    fields = ["C", "splits", "train_acc", "test_acc", "avg_path_len", "time"]
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.DictWriter(out, fieldnames=fields)
        writer.writeheader()
        for r in rows:
            writer.writerow({k: ("" if r[k] is None else r[k]) for k in fields})
    finally:
        if args.out:
            out.close()
    if args.out:
        print(f"sweep: {len(rows)} grid points written to {args.out}")
    return EXIT_OK


def cmd_ensemble(args) -> int:
    seed = _resolve_seed(args.seed)
    if args.estimators < 1:
        raise UsageError("--estimators must be at least 1")
    train, test = _load_split(args, seed)
    budget = per_estimator_budget(args.target_splits, args.estimators) if args.target_splits is not None else None
    t0 = time.perf_counter()
    tuned = None
    try:
        if args.base == "cart":
            if budget is not None:
                args.max_splits = budget
            base = _learner("cart", args, seed)
        elif args.c is not None or budget is None:
            base = _learner(args.base, args, seed)
        else:
            default = c_range_for(args.dataset_name or Path(args.data).name)
            c_range = (default[0] if args.c_min is None else args.c_min,
                       default[1] if args.c_max is None else args.c_max)
            if not 0 < c_range[0] <= c_range[1]:
                raise UsageError(f"need 0 < c-min <= c-max, got {c_range}")
            probe = _learner(args.base, args, seed, C=c_range[0])
            C, achieved = tune_c_for_budget(train, budget, probe, c_range, args.grid, n_jobs=args.jobs)
            tuned = {"C": C, "splits_single": achieved, "per_estimator_budget": budget}
            base = with_c(probe, C)
        if args.method == "bagging":
            model = fit_bagging(train, args.estimators, base, seed, bootstrap=not args.no_bootstrap,
                                n_jobs=args.jobs)
        else:
            model = fit_adaboost(train, args.estimators, base, args.learning_rate, seed)
    except UsageError:
        raise
    except (ValueError, RuntimeError, MemoryError) as exc:
        raise TrainingError(str(exc)) from exc
    elapsed = time.perf_counter() - t0
    _write(args.out, ensemble_to_json(model))
    report = {
        "command": "ensemble", "method": args.method, "base": args.base,
        "hyperparameters": _config_dict(base), "tuning": tuned,
        "dataset": _dataset_stats(train), "n_estimators": len(model.estimators),
        "split_count": model.n_splits, "estimator_splits": [split_count(e) for e in model.estimators],
        "alphas": list(model.alphas) if isinstance(model, AdaBoostModel) else None,
        "train_accuracy": _accuracy(model, train), "test_accuracy": _accuracy(model, test),
        "wall_time_s": elapsed, "seed": seed, "flags": _flags(args),
    }
    _write(args.report, json.dumps(report, indent=1))
    print(f"{args.method}[{args.base}]: estimators={report['n_estimators']} total_splits={model.n_splits}"
          f" train={_fmt(report['train_accuracy'])} test={_fmt(report['test_accuracy'])} time={elapsed:.2f}s")
    return EXIT_OK


def _read_model(path: str):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from None
    if isinstance(doc, dict) and "kind" in doc and "estimators" in doc:
        return ensemble_from_dict(doc)
    return from_dict(doc)


def cmd_export_dot(args) -> int:
    model = _read_model(args.model)
    if hasattr(model, "estimators"):
        if not 0 <= args.estimator < len(model.estimators):
            raise UsageError(f"--estimator must lie in [0, {len(model.estimators)})")
        g = model.estimators[args.estimator]
    else:
        g = model
    ds = None
    if args.data:
        ds = _load(args.data, args.format, args.label_column, not args.no_header)
        if ds.n_features < g.n_features:
            ds = pad_features(ds, g.n_features)
        if ds.n_features != g.n_features or ds.n_classes > g.n_classes:
            raise DataError("dataset shape does not match the model")
    text = to_dot(g, ds)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}: {split_count(g)} internal, {leaf_count(g)} leaf nodes")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_synth(args) -> int:
    seed = _resolve_seed(args.seed)
    try:
        ds = make_corners_synthetic(args.n, tuple(args.t), seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    write_libsvm(ds, args.out)
    print(f"wrote {args.out}: {ds.n_samples} samples, class-1 fraction {ds.labels.mean():.3f}")
    return EXIT_OK


def _data_args(p: argparse.ArgumentParser, split: bool = True):
    p.add_argument("--data", required=True, help="training data file")
    p.add_argument("--format", choices=("libsvm", "csv"), default="libsvm")
    p.add_argument("--label-column", default="-1", help="CSV label column name or index (default last)")
    p.add_argument("--no-header", action="store_true", help="CSV file has no header row")
    if split:
        g = p.add_mutually_exclusive_group()
        g.add_argument("--test", help="separate test file")
        g.add_argument("--test-frac", type=float, help="hold out this fraction as test set")
    p.add_argument("--seed", type=int, default=None, help="random seed (default $TNT_SEED or 0)")


def _learner_args(p: argparse.ArgumentParser):
    p.add_argument("--c", type=float, default=None, help="regularisation / pruning coefficient")
    p.add_argument("--n1", type=int, default=2, help="TnT merge phases")
    p.add_argument("--n2", type=int, default=5, help="TnT grow rounds per phase")
    p.add_argument("--fine-tune-rounds", type=int, default=0)
    p.add_argument("--no-prune-after-fine-tune", action="store_true",
                   help="TnT: keep dead nodes left by fine-tuning")
    p.add_argument("--max-splits", type=int, default=None, help="CART: best-first split budget")
    p.add_argument("--max-iterations", type=int, default=10000, help="NDG iteration cap")
    p.add_argument("--tie-break", choices=("lowest", "random"), default="lowest")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tnt", description="Decision-graph learning (TnT, CART, NDG).")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit one model and report its metrics")
    p.add_argument("--algo", choices=("tnt", "cart", "ndg"), default="tnt")
    _data_args(p)
    _learner_args(p)
    p.add_argument("--out", help="model JSON output")
    p.add_argument("--report", help="report JSON output")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="fit across a log-spaced C grid, write CSV")
    p.add_argument("--algo", choices=("tnt", "cart", "ndg"), default="tnt")
    _data_args(p)
    _learner_args(p)
    p.add_argument("--c-min", type=float)
    p.add_argument("--c-max", type=float)
    p.add_argument("--grid", type=int, default=30)
    p.add_argument("--dataset-name", help="name used to pick the default C range")
    p.add_argument("--out", help="CSV output (default stdout)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ensemble", help="bagging or AdaBoost over TnT/CART/NDG")
    p.add_argument("--method", choices=("bagging", "adaboost"), required=True)
    p.add_argument("--base", choices=("tnt", "cart", "ndg"), default="tnt")
    p.add_argument("--estimators", type=int, default=5)
    p.add_argument("--target-splits", type=int, default=None, help="total split budget across estimators")
    p.add_argument("--learning-rate", type=float, default=1.0)
    p.add_argument("--no-bootstrap", action="store_true", help="bagging: train every estimator on the full set")
    _data_args(p)
    _learner_args(p)
    p.add_argument("--c-min", type=float)
    p.add_argument("--c-max", type=float)
    p.add_argument("--grid", type=int, default=30)
    p.add_argument("--dataset-name")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for bagging / tuning")
    p.add_argument("--out", help="ensemble JSON output")
    p.add_argument("--report", help="report JSON output")
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("export-dot", help="render a model file as Graphviz DOT")
    p.add_argument("--model", required=True)
    p.add_argument("--data", help="colour nodes by the dominant class of these samples")
    p.add_argument("--format", choices=("libsvm", "csv"), default="libsvm")
    p.add_argument("--label-column", default="-1")
    p.add_argument("--no-header", action="store_true")
    p.add_argument("--estimator", type=int, default=0, help="which estimator of an ensemble file")
    p.add_argument("--out", help="DOT output (default stdout)")
    p.set_defaults(func=cmd_export_dot)

    p = sub.add_parser("synth", help="write the corners toy dataset")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--t", type=float, nargs=4, default=(0.2, 0.8, 0.2, 0.8), metavar=("T1", "T2", "T3", "T4"))
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"tnt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, GraphError, OSError) as exc:
        print(f"tnt: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingError as exc:
        print(f"tnt: training failed: {exc}", file=sys.stderr)
        return EXIT_TRAIN


if __name__ == "__main__":
    sys.exit(main())
