"""
Command line interface.

    dpknn fit        --dataset lymph --b 3 [--epsilon 0.3] --out model.json
    dpknn score      --model model.json (--input points.csv | --dataset lymph) --k 5
    dpknn sweep      [--config sweep.cfg] [--dataset ...] --out results.csv
    dpknn plot-data  --results results.csv --axis epsilon --out plots/

Exit status is 0 on success, 1 for invalid input and 2 for other
failures; errors go to stderr prefixed with ``error[validation]:`` or
``error[runtime]:``.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .evaluation import (
    ALGORITHMS,
    ExperimentConfig,
    average_precision,
    auroc,
    make_split,
    precision_at_n,
    run_experiment,
)
from .grid import GridHistogram, GridSpec, build_histogram
from .io import emit_plot_data, emit_results, load_dataset, load_manifest, read_kv, read_results, split_list
from .preprocessing import PreprocessParams, fit_preprocessor, transform
from .privacy import CountProvider
from .scoring import DEFAULT_MAX_VISITED, ScoringConfig, grid_score


def int_list(text: str):
    """``"2-5"`` -> [2, 3, 4, 5]; ``"2,4,8"`` -> [2, 4, 8]."""
    out = []
    for part in split_list(str(text)):
        lo, sep, hi = part.partition("-")
        try:
            out.extend(range(int(lo), int(hi) + 1) if sep and lo else [int(part)])
        except ValueError:
            raise ValidationError(f"bad integer list {text!r}") from None
    return out


def float_list(text: str):
    try:
        return [float(v) for v in split_list(str(text))]
    except ValueError:
        raise ValidationError(f"bad number list {text!r}") from None


def _opt_float(text):
    if text in (None, "", "none", "None"):
        return None
    try:
        return float(text)
    except ValueError:
        raise ValidationError(f"bad number {text!r}") from None


CONFIG_KEYS = {
    "dataset": lambda v: split_list(v),
    "datasets": lambda v: split_list(v),
    "algorithms": lambda v: split_list(v),
    "k": int_list,
    "b": int_list,
    "epsilon": float_list,
    "seeds": int_list,
    "train_frac": float,
    "delta_max": _opt_float,
    "max_visited_cells": int,
    "split": str,
    "split_seed": int,
    "workers": int,
}


def load_config(path=None, overrides=None) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from a key = value file plus overrides."""
    values = {}
    raw = read_kv(path) if path else {}
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    for key, text in raw.items():
        if key not in CONFIG_KEYS:
            raise ValidationError(f"unknown config key {key!r}")
        try:
            values["datasets" if key == "dataset" else key] = CONFIG_KEYS[key](text)
        except ValueError as exc:
            raise ValidationError(f"config key {key!r}: {exc}") from None
    for key in ("algorithms", "k", "b", "epsilon", "seeds", "datasets"):
        if key in values:
            values[key] = tuple(values[key])
    cfg = ExperimentConfig(**values)
    cfg.validate()
    return cfg


# -- commands ----------------------------------------------------------------


def cmd_fit(args):
    manifest = load_manifest(args.dataset)
    data = load_dataset(manifest, verify=not args.no_verify)
    reference, _ = make_split(data, manifest.m_outliers, args.train_frac, args.split_seed)
    params = fit_preprocessor(reference)
    spec = GridSpec.for_params(params, args.b)
    hist = build_histogram(spec, transform(params, reference.points))
    model = {
        "dataset": manifest.name,
        "features": list(reference.feature_names),
        "split_seed": args.split_seed,
        "train_frac": args.train_frac,
        "epsilon": args.epsilon,
        "seed": args.seed,
        "preprocess": params.to_dict(),
        "histogram": hist.to_dict(),
    }
    Path(args.out).write_text(json.dumps(model, indent=1) + "\n", encoding="utf-8")
    print(f"fitted {manifest.name}: {hist.total} reference points in {len(hist.counts)} cells "
          f"(b={args.b}, d={spec.d}) -> {args.out}")


def _read_points(path, features):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, skipinitialspace=True)
        missing = [f for f in features if f not in (reader.fieldnames or [])]
        if missing:
            raise ValidationError(f"{path}: missing columns {missing}")
        rows = []
        for lineno, row in enumerate(reader, 1):
            try:
                rows.append([float(row[f]) for f in features])
            except (TypeError, ValueError):
                raise ValidationError(f"{path}: row {lineno}: unparseable feature value") from None
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    return np.array(rows)


def cmd_score(args):
    try:
        model = json.loads(Path(args.model).read_text(encoding="utf-8"))
        params = PreprocessParams.from_dict(model["preprocess"])
        hist = GridHistogram.from_dict(model["histogram"])
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read model {args.model}: {exc}") from None
    labels = None
    if args.dataset:
        manifest = load_manifest(args.dataset)
        data = load_dataset(manifest, verify=not args.no_verify)
        _, test = make_split(data, manifest.m_outliers, model["train_frac"], model["split_seed"])
        points, labels = test.points, test.labels
    elif args.input:
        points = _read_points(args.input, model["features"])
    else:
        raise ValidationError("score needs --input or --dataset")
    epsilon = model["epsilon"] if args.epsilon is None else args.epsilon
    provider = CountProvider(hist, epsilon=epsilon, seed=model["seed"])
    cfg = ScoringConfig(k=args.k, b=hist.spec.b, weighted=args.weighted, delta_max=args.delta_max,
                        max_visited_cells=args.max_visited_cells, epsilon=epsilon)
    unit = transform(params, points, clamp=True)
    results = [grid_score(provider, p, cfg) for p in unit]
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["row", "score", "cells_visited", "terminated_by"] + (["label"] if labels is not None else []))
        for i, r in enumerate(results):
            extra = [int(labels[i])] if labels is not None else []
            w.writerow([i, repr(float(r.value)), r.cells_visited, r.terminated_by] + extra)
    finally:
        if args.out:
            out.close()
    if labels is not None:
        scores = [r.value for r in results]
        print(f"auroc={auroc(scores, labels):.4f} ap={average_precision(scores, labels):.4f} "
              f"p_at_n={precision_at_n(scores, labels):.4f}", file=sys.stderr)


def cmd_sweep(args):
    overrides = {
        "dataset": ",".join(args.dataset) if args.dataset else None,
        "algorithms": args.algorithms,
        "k": args.k,
        "b": args.b,
        "epsilon": args.epsilon,
        "seeds": args.seeds,
        "delta_max": args.delta_max,
        "max_visited_cells": args.max_visited_cells,
        "split": args.split,
        "workers": args.workers,
    }
    cfg = load_config(args.config, overrides)
    if not cfg.datasets:
        raise ValidationError("no datasets given (config key 'datasets' or --dataset)")
    records = run_experiment(cfg)
    path = emit_results(records, args.out, meta=cfg.to_dict())
    print(f"{len(records)} records -> {path}")


def cmd_plot_data(args):
    records = read_results(args.results)
    paths = emit_plot_data(records, args.axis, args.out, svg=args.svg)
    for p in paths:
        print(p)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"error[validation]: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dpknn", description="Differentially private grid k-NN outlier detection.")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit preprocessing and grid histogram on a reference split")
    f.add_argument("--dataset", required=True, help="manifest file or preset name")
    f.add_argument("--b", type=int, required=True)
    f.add_argument("--epsilon", type=float, default=None, help="privacy budget (omit for exact counts)")
    f.add_argument("--seed", type=int, default=0, help="noise seed")
    f.add_argument("--split-seed", type=int, default=0)
    f.add_argument("--train-frac", type=float, default=0.8)
    f.add_argument("--no-verify", action="store_true", help="skip manifest row-count checks")
    f.add_argument("--out", default="model.json")
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("score", help="score points against a fitted model")
    s.add_argument("--model", required=True)
    s.add_argument("--input", help="CSV with a header holding the model's feature columns")
    s.add_argument("--dataset", help="score the test split of this manifest instead")
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--weighted", action="store_true")
    s.add_argument("--epsilon", type=float, default=None, help="override the model's epsilon")
    s.add_argument("--delta-max", type=float, default=None)
    s.add_argument("--max-visited-cells", type=int, default=DEFAULT_MAX_VISITED)
    s.add_argument("--no-verify", action="store_true")
    s.add_argument("--out")
    s.set_defaults(func=cmd_score)

    w = sub.add_parser("sweep", help="run an experiment sweep and write a results CSV")
    w.add_argument("--config")
    w.add_argument("--dataset", action="append", help="manifest or preset (repeatable)")
    w.add_argument("--algorithms", help=f"comma list of {','.join(ALGORITHMS)}")
    w.add_argument("--k", help="e.g. 5 or 5,10")
    w.add_argument("--b", help="e.g. 2-10 or 2,4")
    w.add_argument("--epsilon", help="comma list")
    w.add_argument("--seeds", help="e.g. 0-9")
    w.add_argument("--delta-max")
    w.add_argument("--max-visited-cells")
    w.add_argument("--split", choices=("fixed", "per_seed"))
    w.add_argument("--workers")
    w.add_argument("--out", default="results.csv")
    w.set_defaults(func=cmd_sweep)

    pd = sub.add_parser("plot-data", help="write plot-ready CSVs from a results file")
    pd.add_argument("--results", required=True)
    pd.add_argument("--axis", choices=("b", "epsilon"), required=True)
    pd.add_argument("--svg", action="store_true", help="also write an SVG chart per file")
    pd.add_argument("--out", default="plots")
    pd.set_defaults(func=cmd_plot_data)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ValidationError as exc:
        print(f"error[validation]: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - top-level reporting
        print(f"error[runtime]: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
