"""Command-line entry point: ``drclab {fig5,fig6,fig7,fig8,theory,process}``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import experiments
from ._validation import check_seed


def _u64(text):
    try:
        return check_seed(int(text, 0))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drclab", description="Multiband DRC mixture experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("fig5", "envelope pairs and across-source correlation"),
        ("fig6", "effective compression function overlays and ECR table"),
        ("fig7", "long-term SNR against compression ratio"),
        ("fig8", "SNR change for several interferer types"),
        ("theory", "exact oracle checks of the mixture inequalities"),
        ("process", "compress a mixture and export WAVs, gains and envelopes"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", type=Path, help="JSON config; missing keys use the built-in defaults")
        p.add_argument("--seed", type=_u64, default=None, help="base seed (unsigned 64-bit)")
        p.add_argument("--out", type=Path, default=None, help="output directory")
        if name == "theory":
            p.add_argument("--instances", type=int, default=500, help="random instances per checker")
    return parser


def _report(result, stream) -> None:
    for check, ok in result.checks.items():
        print(f"{'PASS' if ok else 'FAIL'}  {check}", file=stream)
    if result.files:
        print(f"wrote {len(result.files)} files to {Path(result.files[-1]).parent}", file=stream)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "theory":
            seed = args.seed if args.seed is not None else 0
            out = args.out if args.out is not None else Path("out/theory")
            result = experiments.run_theory_suite(seed, args.instances, out)
        else:
            cfg = experiments.default_config(args.command)
            if args.config is not None:
                cfg = experiments.ExperimentConfig.load(args.config, base=cfg)
            if args.seed is not None:
                cfg = cfg.with_seed(args.seed)
            result = experiments.RUNNERS[args.command](cfg, args.out)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _report(result, sys.stdout)
    return 0 if result.passed else 1


if __name__ == "__main__":
    sys.exit(main())
