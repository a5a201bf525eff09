"""Command-line experiment runner.

Usage::

    python -m phik reconstruct --config cfg.json --out results/
    python -m phik active --seed 3 --method phik
    python -m phik mlmc-compare
    python -m phik verify-bounds

Exit status is 0 on success, 2 for an invalid configuration and 3 when a
bound or constraint check fails.
"""
from __future__ import annotations

import argparse
import json
import sys

from .experiments import KINDS, METHODS, RUNNERS, ConfigError, make_config

EXIT_OK, EXIT_CONFIG, EXIT_VIOLATION = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="phik", description="Physics-informed Kriging experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind)
        p.add_argument("--config", help="JSON file with experiment settings")
        p.add_argument("--seed", type=int, help="base seed (overrides the config)")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--method", action="append", choices=METHODS,
                       help="method to run; repeat for several (overrides the config)")
    return parser


def _load(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return data


def _print_table(kind: str, summary: dict):
    if kind == "verify-bounds":
        ex = summary["exact_preservation"]
        print(f"{'check':<22}{'result':>10}")
        print(f"{'exact preservation':<22}{'PASS' if ex['passed'] else 'FAIL':>10}")
        if ex["error"]:
            print(f"  {ex['error']}")
        for name, s in summary["suites"].items():
            status = "PASS" if s["passed"] == s["trials"] else "FAIL"
            print(f"{name:<22}{status:>10}  {s['passed']}/{s['trials']}")
        return
    if kind == "mlmc-compare":
        print(f"{'m_fine':>8}{'mc_err':>12}{'mlmc_err':>12}{'mlmc_cost':>12}")
        for r in summary["rows"]:
            print(f"{r['m_fine']:>8}{r['mc_rel_error']:>12.4f}{r['mlmc_rel_error']:>12.4f}{r['mlmc_cost']:>12.2f}")
        return
    for r in summary["results"]:
        print(f"{r['method']:<10} N={r['N']:<4} rel_error={r['rel_error']:.4f}  alpha={r['alpha']:.3g}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = make_config(args.command, _load(args.config), seed=args.seed, out=args.out,
                          methods=args.method)
        summary = RUNNERS[args.command](cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    _print_table(args.command, summary)
    if args.command == "verify-bounds" and not summary["passed"]:
        return EXIT_VIOLATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
