"""Command line entry point: ``tomosemi run | compare | schema``.

Exit codes: 0 pass, 1 check failure, 2 invalid input.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .runner import ConfigError, compare_runs, config_schema, load_config, run, write_report


def _cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"invalid config: field {exc.field!r}: {exc}", file=sys.stderr)
        return 2
    try:
        report = run(cfg, seed=args.seed)
    except ConfigError as exc:
        print(f"invalid config: field {exc.field!r}: {exc}", file=sys.stderr)
        return 2
    out = args.out or cfg.get("output_dir") or "out"
    path = write_report(report, out)
    for rec in report.records:
        print(f"{'PASS' if rec.passed else 'FAIL'}  {rec.name}  value={rec.value:.3e}  tol={rec.tolerance:.1e}")
    print(f"status: {report.status}  report: {path}")
    return 0 if report.status == "pass" else 1


def _cmd_compare(args) -> int:
    try:
        a = json.loads(Path(args.a).read_text())
        b = json.loads(Path(args.b).read_text())
        diff = compare_runs(a, b, args.rtol)
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"cannot compare: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(diff, indent=2))
    return 0 if not (diff["differences"] or diff["missing"]) else 1


def _cmd_schema(args) -> int:
    print(json.dumps(config_schema(), indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tomosemi", description="Tomographic semigroup experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment configuration")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (default: config output_dir or ./out)")
    r.add_argument("--seed", type=int, help="override the master seed")
    r.set_defaults(func=_cmd_run)
    c = sub.add_parser("compare", help="compare two report.json files")
    c.add_argument("a")
    c.add_argument("b")
    c.add_argument("--rtol", type=float, default=1e-9)
    c.set_defaults(func=_cmd_compare)
    s = sub.add_parser("schema", help="print the configuration JSON schema")
    s.set_defaults(func=_cmd_schema)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
