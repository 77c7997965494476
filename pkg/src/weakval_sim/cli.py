"""Command line front end.

    weakval-sim run <config> [--seed N] [--n-traj N] [--out DIR]
    weakval-sim validate <config>
    weakval-sim list-experiments

Exit codes: 0 success, 1 usage or configuration error, 2 at least one
statistical check failed. Every run requires a seed (config or flag); there
is no wall-clock fallback, so identical invocations produce identical bytes.
"""

from __future__ import annotations

import argparse
import sys

from .config import load_config
from .errors import ConfigError, WeakvalError
from .experiments import EXPERIMENTS, run_experiment


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; keep 2 reserved for failed checks.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="weakval-sim",
        description="Weak-value estimation on simulated continuous measurement records.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a configured experiment")
    run.add_argument("config", help="path to a key=value or JSON config file")
    run.add_argument("--seed", type=int, help="override the config seed")
    run.add_argument("--n-traj", type=int, help="override the trajectory count")
    run.add_argument("--out", help="output directory (default: config out_dir or '.')")

    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("config", help="path to a key=value or JSON config file")

    sub.add_parser("list-experiments", help="list available experiments")
    return parser


def _cmd_list() -> int:
    width = max(len(n) for n in EXPERIMENTS)
    for name, exp in EXPERIMENTS.items():
        print(f"{name:<{width}}  {exp.description}")
    return 0


def _cmd_validate(path: str) -> int:
    try:
        doc = load_config(path)
        result = run_experiment(doc, dry=True)
    except ConfigError as e:
        print(e.render(path), file=sys.stderr)
        return 1
    except WeakvalError as e:
        print(f"{path}: error: {e}", file=sys.stderr)
        return 1
    for w in result.warnings:
        print(w.render(path), file=sys.stderr)
    print(f"{path}: ok")
    return 0


def _cmd_run(args) -> int:
    path = args.config
    try:
        doc = load_config(path)
        if args.seed is not None:
            doc.set_override("seed", args.seed)
        if args.n_traj is not None:
            doc.set_override("n_traj", args.n_traj)
        result = run_experiment(doc, out_dir=args.out)
    except ConfigError as e:
        print(e.render(path), file=sys.stderr)
        return 1
    except WeakvalError as e:
        print(f"{path}: error: {e}", file=sys.stderr)
        return 1
    for w in result.warnings:
        print(w.render(path), file=sys.stderr)
    for c in result.checks:
        print(c.render())
    for f in result.files:
        print(f"wrote {f}")
    if not result.all_passed:
        failed = sum(1 for c in result.checks if not c.passed)
        print(f"{failed} of {len(result.checks)} checks failed", file=sys.stderr)
        return 2
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "list-experiments":
        return _cmd_list()
    if args.command == "validate":
        return _cmd_validate(args.config)
    return _cmd_run(args)


if __name__ == "__main__":
    sys.exit(main())
