"""Command-line surface: validate, run, report, gen-synthetic, protocol-check.

Exit codes: 0 success, 1 conformance-check failures, 2 configuration or
validation errors, 3 I/O failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .biasing import calibrate_mean_half, compile_bias
from .data import outcome_range, write_csv
from .errors import OsbenchError
from .extern import conformance_checks
from .harness import (
    BenchmarkConfig,
    SOURCE_STREAM_KEY,
    aggregate_by_source,
    load_report,
    load_source,
    run_benchmark,
    stream,
    write_report,
)
from .reporting import box_table, render_boxes_svg, write_box_csv, write_by_source_csv, write_correlation_csv
from .sampling import apo_to_rct
from .synthetic import SyntheticConfig, expected_effect, gen_apo, true_effect


def load_config_doc(path: str | Path) -> dict:
    text = Path(path).read_text()
    if str(path).endswith((".yaml", ".yml")):
        import yaml

        return yaml.safe_load(text)
    return json.loads(text)


# -- validate -------------------------------------------------------------------


def cmd_validate(args) -> int:
    findings: list[tuple[str, str]] = []
    try:
        cfg = BenchmarkConfig.from_dict(load_config_doc(args.config))
        source = load_source(cfg)
        bias = compile_bias(cfg.bias, source)
        if cfg.calibrate:
            bias = calibrate_mean_half(bias, source)
    except FileNotFoundError as exc:
        print(f"ERROR FileNotFound: {exc}")
        return 2
    except OsbenchError as exc:
        print(f"ERROR {type(exc).__name__}: {exc}")
        return 2

    t = source.treatment.astype(np.int64)
    n1, n0 = int((t == 1).sum()), int((t == 0).sum())
    findings.append(("OK", f"source rows: {source.n_rows}"))
    findings.append(("OK", f"arm counts: treated={n1} control={n0} "
                           f"(treated fraction {n1 / max(source.n_rows, 1):.3f})"))
    if n1 == 0 or n0 == 0:
        findings.append(("ERROR", "single-arm source table"))
    span = outcome_range(source)
    findings.append(("OK", f"outcome range: {span.value} (binary={span.binary})"))
    if span.degenerate:
        findings.append(("ERROR", "DegenerateRange: constant outcome"))
    for name, corr in bias.outcome_correlations.items():
        findings.append(("OK", f"biasing covariate {name!r} / outcome correlation: {corr:+.4f}"))
    for name in bias.weak_covariates:
        findings.append(("WARN", f"WeakConfounding: biasing covariate {name!r} is nearly "
                                 f"uncorrelated with outcome (|r| < 0.05)"))
    p = bias.probabilities(source)
    findings.append(("OK", f"mean selection probability: {p.mean():.6f} "
                           f"(range {p.min():.4f}..{p.max():.4f})"))
    for name in cfg.hidden:
        if name not in source.covariate_names:
            findings.append(("ERROR", f"MissingColumn: hidden covariate {name!r} not in source"))

    status = 2 if any(level == "ERROR" for level, _ in findings) else 0
    for level, msg in findings:
        print(f"{level} {msg}")
    return status


# -- run -----------------------------------------------------------------------


def cmd_run(args) -> int:
    try:
        doc = load_config_doc(args.config)
        if args.trials is not None:
            doc["n_trials"] = args.trials
        if args.seed is not None:
            doc["base_seed"] = args.seed
        if args.workers is not None:
            doc["workers"] = args.workers
        if args.estimators is not None:
            doc["estimators"] = args.estimators.split(",")
        cfg = BenchmarkConfig.from_dict(doc)
    except FileNotFoundError as exc:
        print(f"ERROR FileNotFound: {exc}", file=sys.stderr)
        return 2
    except (OsbenchError, KeyError, ValueError) as exc:
        print(f"ERROR {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2

    try:
        report = run_benchmark(cfg)
    except OsbenchError as exc:
        print(f"ERROR {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    try:
        write_report(report, args.output_dir)
    except OSError as exc:
        print(f"ERROR output not writable: {exc}", file=sys.stderr)
        return 3
    for est, agg in report.aggregates.items():
        mean = agg["mean_abs_norm_error"]
        shown = "n/a" if mean is None else f"{mean:.6f}"
        print(f"{est}: mean |normalized error| = {shown} "
              f"({agg['n_ok']} ok, {agg['n_failed']} failed)")
    print(f"report written to {args.output_dir}")
    return 0


# -- report ---------------------------------------------------------------------


def cmd_report(args) -> int:
    try:
        docs = [load_report(p) for p in args.reports]
    except FileNotFoundError as exc:
        print(f"ERROR FileNotFound: {exc}", file=sys.stderr)
        return 2
    except OsbenchError as exc:
        print(f"ERROR {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    if args.labels:
        labels = args.labels.split(",")
        if len(labels) != len(docs):
            print("ERROR label count does not match report count", file=sys.stderr)
            return 2
    else:
        labels = [Path(p).parent.name or f"r{i}" for i, p in enumerate(args.reports)]
    tagged = list(zip(labels, docs))

    outdir = Path(args.output_dir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        rows = box_table(tagged)
        write_box_csv(rows, outdir / "box_stats.csv")
        render_boxes_svg(rows, outdir / "boxes.svg")
        write_correlation_csv(tagged, outdir / "correlation.csv")
        write_by_source_csv(aggregate_by_source(tagged), outdir / "by_source.csv")
    except OSError as exc:
        print(f"ERROR output not writable: {exc}", file=sys.stderr)
        return 3
    print(f"wrote box_stats.csv, boxes.svg, correlation.csv, by_source.csv to {outdir}")
    return 0


# -- gen-synthetic ----------------------------------------------------------------


def cmd_gen_synthetic(args) -> int:
    try:
        doc = load_config_doc(args.config)
        doc = doc.get("synthetic", doc.get("source", {}).get("synthetic", doc))
        if args.seed is not None:
            doc["seed"] = args.seed
        cfg = SyntheticConfig.from_dict(doc)
        apo = gen_apo(cfg)
    except FileNotFoundError as exc:
        print(f"ERROR FileNotFound: {exc}", file=sys.stderr)
        return 2
    except (OsbenchError, TypeError, ValueError) as exc:
        print(f"ERROR {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    table = apo if args.table == "apo" else apo_to_rct(apo, stream(cfg.seed, SOURCE_STREAM_KEY))
    try:
        write_csv(table, args.out)
    except OSError as exc:
        print(f"ERROR output not writable: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {args.table} table ({table.n_rows} rows) to {args.out}")
    print(f"sample-exact effect: {true_effect(apo):.6f}; "
          f"noise-free effect: {expected_effect(cfg, apo):.6f}")
    return 0


# -- protocol-check ----------------------------------------------------------------


def cmd_protocol_check(args) -> int:
    if not args.command:
        print("ERROR no adapter command given", file=sys.stderr)
        return 2
    results = conformance_checks(tuple(args.command))
    failures = 0
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        failures += 0 if ok else 1
    return 0 if failures == 0 else 1


# -- entry ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="osbench",
        description="Constructed observational data benchmarks from randomized trial tables")
    sub = parser.add_subparsers(dest="command_name", required=True)

    p = sub.add_parser("validate", help="check a benchmark config and its dataset/bias")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="run the benchmark and write report artifacts")
    p.add_argument("config")
    p.add_argument("-o", "--output-dir", required=True)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--estimators", default=None, help="comma-separated builtin estimator ids")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="render tables and plots from report documents")
    p.add_argument("reports", nargs="+")
    p.add_argument("-o", "--output-dir", required=True)
    p.add_argument("--labels", default=None, help="comma-separated source labels")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("gen-synthetic", help="emit a synthetic table as CSV")
    p.add_argument("config")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--table", choices=("apo", "rct"), default="rct")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("protocol-check", help="conformance-test an external estimator adapter")
    p.add_argument("command", nargs=argparse.REMAINDER,
                   help="adapter command line (prefix with -- to pass flags)")
    p.set_defaults(func=cmd_protocol_check)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "command", None) and args.command and args.command[0] == "--":
        args.command = args.command[1:]
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
