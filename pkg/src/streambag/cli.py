"""Command line front end: ``bench``, ``rd`` and ``eval``.

Every cell starts from a fresh ensemble.  Outputs are CSV files plus a JSON
summary in ``--out-dir``; apart from timing columns they are reproducible
for a fixed seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import statistics
import sys
from pathlib import Path

from .core import DomainError
from .datasets import GENERATORS, SyntheticSpec, generate, load_arff, load_csv, load_schema
from .ensembles import VARIANTS, Ensemble, EnsembleConfig
from .evaluation import MetricsReport, ConfusionMatrix, write_metrics_csv, write_metrics_json
from .executor import ExecConfig, run
from .locality import (decade_bins, full_training_trace, poisson_weight_trace, rd_bound_minibatch,
                       rd_histogram)

log = logging.getLogger("streambag")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 2, 3
DEFAULT_SIZES = [100, 150]
DEFAULT_BATCHES = [1, 25, 50, 100, 250, 500, 1000, 2000]
DEFAULT_RD_BATCHES = [1, 10, 50, 100, 250]
EMITS = ("timings", "metrics", "rd", "changes")


class UsageError(Exception):
    pass


def parse_synthetic(text: str) -> SyntheticSpec:
    """``NAME[:key=value,...]``, inline JSON, or a path to a JSON file.

    Drift points are separated by ``/``, e.g.
    ``abrupt_bernoulli_drift:n=20000,drift_points=5000/10000``.
    """
    if text.endswith(".json"):
        with open(text) as fh:
            return SyntheticSpec.from_json(fh.read())
    if text.lstrip().startswith("{"):
        return SyntheticSpec.from_json(text)
    name, _, rest = text.partition(":")
    if name not in GENERATORS:
        raise UsageError(f"unknown generator {name!r}; expected one of {GENERATORS}")
    kw = {}
    for item in filter(None, rest.split(",")):
        key, eq, value = item.partition("=")
        if not eq:
            raise UsageError(f"bad synthetic option {item!r}")
        if key == "drift_points":
            kw[key] = tuple(int(v) for v in value.split("/") if v)
        elif key == "noise":
            kw[key] = float(value)
        elif key in ("n", "seed", "n_features"):
            kw[key] = int(value)
        else:
            raise UsageError(f"unknown synthetic option {key!r}")
    kw.setdefault("n", 10_000)
    return SyntheticSpec(name, **kw)


def _source(args):
    """Return (name, schema, factory) where factory() yields a fresh stream."""
    if args.synthetic:
        spec = parse_synthetic(args.synthetic)
        schema, _ = generate(spec)
        return spec.generator, schema, lambda: generate(spec)[1]
    path = args.dataset
    if not os.path.isfile(path):
        raise UsageError(f"dataset file {path!r} not found")
    if path.endswith(".arff"):
        schema, it = load_arff(path)
        it.close()
        return Path(path).stem, schema, lambda: load_arff(path)[1]
    if not args.schema:
        raise UsageError("CSV datasets need --schema")
    schema = load_schema(args.schema)
    return Path(path).stem, schema, lambda: load_csv(path, schema)


def _env_threads() -> int:
    raw = os.environ.get("STREAMBAG_THREADS")
    if raw is None:
        return 1
    try:
        v = int(raw)
    except ValueError:
        raise UsageError(f"STREAMBAG_THREADS must be an integer, got {raw!r}") from None
    if v < 1:
        raise UsageError("STREAMBAG_THREADS must be >= 1")
    return v


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _metrics(schema, labels, result) -> MetricsReport:
    cm = ConfusionMatrix(schema.n_classes)
    cm.update(labels, result.predictions)
    return MetricsReport.from_confusion(cm, result.change_log.changes_detected())


def _timed_run(config, schema, factory, exec_cfg):
    ens = Ensemble(config, schema)
    data = list(factory())
    result = run(ens, data, exec_cfg)
    return result, _metrics(schema, [x.label for x in data], result)


def cmd_bench(args) -> dict:
    name, schema, factory = _source(args)
    out = Path(args.out_dir)
    raw_rows, summary = [], []
    emit = set(args.emit or ("timings", "metrics"))
    for algo in args.algo:
        for m in args.ensemble_size or DEFAULT_SIZES:
            config = EnsembleConfig(algo, m=m, seed=args.seed)
            base = []
            for rep in range(args.reps):
                res, _ = _timed_run(config, schema, factory, ExecConfig("sequential"))
                base.append(res.timing["total"])
                raw_rows.append((algo, name, m, 1, 1, rep, "total", res.timing["total"]))
            base_mean = statistics.fmean(base)
            raw_rows.append((algo, name, m, 1, 1, "mean", "total", base_mean))
            for b in args.batch_size or DEFAULT_BATCHES:
                if args.mode == "sequential":
                    cell = ExecConfig("sequential")
                elif args.mode == "parallel_per_instance":
                    cell = ExecConfig("parallel_per_instance", args.threads)
                else:
                    cell = ExecConfig("minibatch", args.threads, b, args.pin_cores)
                walls, metrics = [], None
                if args.mode == "sequential":
                    walls = base
                else:
                    for rep in range(args.reps):
                        res, metrics = _timed_run(config, schema, factory, cell)
                        walls.append(res.timing["total"])
                        for phase, secs in sorted(res.timing.items()):
                            raw_rows.append((algo, name, m, b, args.threads, rep, phase, secs))
                    raw_rows.append((algo, name, m, b, args.threads, "mean", "total",
                                     statistics.fmean(walls)))
                mean = statistics.fmean(walls)
                row = {"algorithm": algo, "dataset": name, "m": m, "batch_size": b,
                       "threads": cell.num_threads, "mode": cell.mode, "mean_seconds": mean,
                       "speedup": base_mean / mean if mean > 0 else 0.0}
                if metrics is not None and "metrics" in emit:
                    row.update(precision=metrics.precision, recall=metrics.recall,
                               accuracy=metrics.accuracy)
                summary.append(row)
    if "timings" in emit:
        with open(out / "bench_timings.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("algorithm", "dataset", "m", "b", "threads", "rep", "phase", "seconds"))
            w.writerows(raw_rows)
    fields = ["algorithm", "dataset", "m", "batch_size", "threads", "mode", "mean_seconds",
              "speedup", "precision", "recall", "accuracy"]
    with open(out / "bench_summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        w.writeheader()
        w.writerows(summary)
    return {"command": "bench", "cells": summary}


def cmd_rd(args) -> dict:
    out = Path(args.out_dir)
    m = (args.ensemble_size or [100])[0]
    lam = EnsembleConfig(args.algo[0]).lam
    files = []
    for b in args.batch_size or DEFAULT_RD_BATCHES:
        if args.full_training:
            trace = full_training_trace(args.n, m, b)
        else:
            trace = poisson_weight_trace(args.n, m, b, lam, args.seed)
        hist = rd_histogram(trace, decade_bins(m))
        path = out / f"rd_b{b}.csv"
        hist.write_csv(path, bound=rd_bound_minibatch(args.n, m, b))
        files.append({"batch_size": b, "file": path.name, "finite": hist.finite,
                      "infinite": hist.infinite, "fraction_top_bin": hist.fraction(m - 9, m)})
    return {"command": "rd", "n": args.n, "m": m, "lambda": lam, "histograms": files}


def cmd_eval(args) -> dict:
    name, schema, factory = _source(args)
    out = Path(args.out_dir)
    rows, changes = [], []
    emit = set(args.emit or ("metrics", "changes"))
    for algo in args.algo:
        m = (args.ensemble_size or [10])[0]
        config = EnsembleConfig(algo, m=m, seed=args.seed)
        for b in args.batch_size or DEFAULT_BATCHES:
            res, rep = _timed_run(config, schema, factory,
                                  ExecConfig("minibatch", args.threads, b, args.pin_cores))
            row = rep.row()
            row.update(algorithm=algo, dataset=name, batch_size=b, seed=args.seed)
            rows.append(row)
            if algo in ("LBag", "OBAdwin"):
                changes.append({"algorithm": algo, "batch_size": b,
                                "changes_detected": rep.changes_detected})
            if "changes" in emit:
                res.change_log.write_csv(out / f"changes_{algo}_b{b}.csv")
    if "metrics" in emit:
        write_metrics_csv(out / "metrics.csv", rows)
        write_metrics_json(out / "metrics.json", rows)
    if changes:
        with open(out / "change_counts.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["algorithm", "batch_size", "changes_detected"])
            w.writeheader()
            w.writerows(changes)
    return {"command": "eval", "metrics": rows, "change_counts": changes}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="streambag",
                                     description="Mini-batch online bagging benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        p.add_argument("--algo", action="append", choices=VARIANTS,
                       help="ensemble variant (repeatable)")
        if data:
            src = p.add_mutually_exclusive_group(required=True)
            src.add_argument("--dataset", help="ARFF or CSV file")
            src.add_argument("--synthetic", help="generator spec, e.g. threshold_concept:n=5000")
            p.add_argument("--schema", help="JSON schema sidecar for CSV datasets")
        p.add_argument("--ensemble-size", type=_positive, action="append")
        p.add_argument("--batch-size", type=_positive, action="append")
        p.add_argument("--threads", type=_positive, default=None,
                       help="worker threads (default: $STREAMBAG_THREADS or 1)")
        p.add_argument("--seed", type=int, default=1)
        p.add_argument("--reps", type=_positive, default=3)
        p.add_argument("--pin-cores", action="store_true")
        p.add_argument("--out-dir", default=".")
        p.add_argument("--emit", action="append", choices=EMITS)

    bench = sub.add_parser("bench", help="wall-time benchmark against the sequential baseline")
    common(bench)
    bench.add_argument("--mode", choices=("minibatch", "parallel_per_instance", "sequential"),
                       default="minibatch")
    rd = sub.add_parser("rd", help="reuse-distance histograms of member-access traces")
    common(rd, data=False)
    rd.add_argument("--n", type=_positive, default=5000)
    rd.add_argument("--full-training", action="store_true",
                    help="every member trains on every instance")
    ev = sub.add_parser("eval", help="prequential metrics and change counts per batch size")
    common(ev)
    return parser


COMMANDS = {"bench": cmd_bench, "rd": cmd_rd, "eval": cmd_eval}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on bad usage
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        if args.threads is None:
            args.threads = _env_threads()
        if not args.algo:
            args.algo = ["LBag"]
        Path(args.out_dir).mkdir(parents=True, exist_ok=True)
        summary = COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"streambag: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DomainError, OSError, ValueError) as exc:
        print(f"streambag: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    with open(Path(args.out_dir) / f"{args.command}_summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    log.info("wrote %s outputs to %s", args.command, args.out_dir)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
