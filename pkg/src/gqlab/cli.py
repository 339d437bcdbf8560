"""``gqlab`` command line: run / oracle / validate.

Exit codes: 0 success (a diverged seed still counts as success, it is
reported in the summary), 1 invalid config, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .experiment import ConfigError, compute_oracle, fmt, load_config, run_experiment


def _parse_seeds(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gqlab", description="GQ(lambda) experiments on finite MDPs")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run every seed and write curve + summary files")
    run.add_argument("--config", required=True)
    run.add_argument("--output", help="override output.directory")
    run.add_argument("--seeds", type=_parse_seeds, help="override run.seeds, e.g. 1,2,3")
    run.add_argument("--workers", type=int, default=1, help="seeds run concurrently (default 1)")
    run.add_argument("--quiet", action="store_true")

    oracle = sub.add_parser("oracle", help="print the exact action-value table")
    oracle.add_argument("--config", required=True)

    validate = sub.add_parser("validate", help="check a config without running it")
    validate.add_argument("--config", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = load_config(args.config)
        if args.command == "run":
            overrides = {}
            if args.output:
                overrides["output.directory"] = args.output
            if args.seeds is not None:
                overrides["run.seeds"] = args.seeds
            if overrides:
                spec = spec.with_overrides(**overrides)
    except ConfigError as exc:
        print(f"gqlab: invalid config: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"gqlab: {exc}", file=sys.stderr)
        return 1

    try:
        if args.command == "validate":
            print(f"{args.config}: ok ({len(spec.seeds)} seeds, {spec['run.num_steps']} steps each)")
        elif args.command == "oracle":
            table = compute_oracle(spec)
            print(f"# residual = {fmt(table.residual)}")
            print("state,action,q")
            for s in range(spec.mdp.num_states):
                for a in range(spec.mdp.num_actions):
                    print(f"{s},{a},{fmt(table.values[s, a])}")
        else:
            run_experiment(spec, workers=args.workers)
            if not args.quiet:
                print(Path(spec["output.directory"], "summary.txt").read_text(), end="")
    except Exception as exc:  # noqa: BLE001 - any runtime failure maps to exit code 2
        print(f"gqlab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
