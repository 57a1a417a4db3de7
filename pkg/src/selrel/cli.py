"""Command-line entry points.

Subcommands:
  toygen    materialize the toy task: gradient containers, docs, metadata
  score     score one explicit selection and print its dB
  select    run the strategy grid and write selections.csv
  validate  run the grid with fine-tuning validation; write records + summary
  report    full run: results/auc/improvement tables plus selections
"""

import argparse
import json
import os
import sys

from .errors import SelrelError
from .gradstore import write_gradient_matrix
from .pipeline import (
    ExperimentConfig,
    _Workbench,
    correlation_summary,
    run_experiment,
    write_report,
    write_selections,
)
from .relevance import format_db

DEFAULT_TOY = {
    "n_train": 200,
    "n_test": 20,
    "feature_dim": 8,
    "n_classes": 4,
    "redundancy": 2,
}


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON experiment config")
    parser.add_argument("--seed", type=int, help="master seed override")
    parser.add_argument("--out-dir", help="output directory override")
    parser.add_argument(
        "--probe-mode", help="probe source: 'test' or 'population:N'"
    )
    parser.add_argument(
        "--model",
        choices=["mse", "nnls", "simplex"],
        help="reconstruction model",
    )
    parser.add_argument(
        "--lambda",
        dest="lambda_grid",
        type=float,
        action="append",
        help="facility-location lambda (repeatable)",
    )
    parser.add_argument("--m", type=float, help="cost ceiling for influence costs")
    parser.add_argument("--pool", type=int, help="candidate pool size")


def _build_config(args, validate: bool | None = None) -> ExperimentConfig:
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            data = json.load(fh)
    else:
        data = {"toy": dict(DEFAULT_TOY)}
    for key in ("seed", "out_dir", "probe_mode", "model", "lambda_grid", "m", "pool"):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    if validate is not None:
        data["validate"] = validate
    if data.get("toy") is not None and "seed" not in data["toy"]:
        data["toy"]["seed"] = data.get("seed", 0)
    return ExperimentConfig.from_dict(data)


def _out_dir(config: ExperimentConfig) -> str:
    out = config.out_dir or "selrel_out"
    os.makedirs(out, exist_ok=True)
    return out


def _cmd_toygen(args) -> int:
    config = _build_config(args)
    if config.toy is None:
        print("toygen requires a toy task config", file=sys.stderr)
        return 2
    bench = _Workbench(config)
    out = _out_dir(config)
    write_gradient_matrix(bench.train_raw, os.path.join(out, "train.grdm"))
    write_gradient_matrix(bench.test_raw, os.path.join(out, "test.grdm"))
    dataset = bench.dataset
    meta = {
        "n_train": len(dataset.train_ids),
        "n_test": len(dataset.test_ids),
        "gradient_dim": bench.train_raw.dim,
        "train_labels": [int(v) for v in dataset.train_y],
        "test_labels": [int(v) for v in dataset.test_y],
        "final_loss": bench.model.loss_trace[-1],
    }
    with open(os.path.join(out, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    print(f"wrote toy task to {out} (final training loss {meta['final_loss']:.6f})")
    return 0


def _cmd_score(args) -> int:
    config = _build_config(args)
    bench = _Workbench(config)
    members = [m for m in args.members.split(",") if m]
    known = set(bench.train_raw.ids)
    unknown = [m for m in members if m not in known]
    if unknown:
        print(f"error: unknown training ids {unknown}", file=sys.stderr)
        return 2
    if args.test_id not in set(bench.test_raw.ids):
        print(f"error: unknown test id {args.test_id!r}", file=sys.stderr)
        return 2
    probes = bench.probes_for(args.test_id)
    score = bench.score_members(members, probes)
    print(f"{args.test_id}: {format_db(score.decibels)} (k={len(members)})")
    return 0


def _cmd_select(args) -> int:
    config = _build_config(args, validate=False)
    result = run_experiment(config)
    out = _out_dir(config)
    path = write_selections(result.selections, os.path.join(out, "selections.csv"))
    print(f"wrote {path} ({len(result.selections)} selections)")
    return _report_failures(result)


def _cmd_validate(args) -> int:
    config = _build_config(args, validate=True)
    result = run_experiment(config)
    out = _out_dir(config)
    write_report(result.rows, out, validation=result.records)
    summary = correlation_summary(result.records)
    with open(os.path.join(out, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    print(
        f"wrote validation tables to {out} "
        f"({summary['n_records']} records, "
        f"spearman_full={summary['spearman_full']})"
    )
    return _report_failures(result)


def _cmd_report(args) -> int:
    config = _build_config(args)
    result = run_experiment(config)
    out = _out_dir(config)
    validation = result.records if config.validate else None
    paths = write_report(result.rows, out, validation=validation)
    paths.append(write_selections(result.selections, os.path.join(out, "selections.csv")))
    for path in paths:
        print(f"wrote {path}")
    return _report_failures(result)


def _report_failures(result) -> int:
    for failure in result.failures:
        print(f"FAILED {failure}", file=sys.stderr)
    return 1 if result.failures else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="selrel",
        description="Score, construct, and validate example-based explanation sets.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("toygen", help="materialize the toy classification task")
    _add_common(p)
    p.set_defaults(func=_cmd_toygen)

    p = sub.add_parser("score", help="score one explicit selection")
    _add_common(p)
    p.add_argument("--test-id", required=True, help="probe test instance id")
    p.add_argument(
        "--members", required=True, help="comma-separated training example ids"
    )
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("select", help="run the selection grid")
    _add_common(p)
    p.set_defaults(func=_cmd_select)

    p = sub.add_parser("validate", help="run the grid with fine-tuning validation")
    _add_common(p)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("report", help="run the grid and write report tables")
    _add_common(p)
    p.set_defaults(func=_cmd_report)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SelrelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
