"""Command-line entry point: ``scalinglab <experiment> [options]``."""

from __future__ import annotations

import argparse
import sys

from ..errors import ScalingLabError
from .config import EXPERIMENTS, build_config, load_config
from .experiments import execute


def _pairs(items: list[str]) -> dict[str, str]:
    out = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise argparse.ArgumentTypeError(f"expected key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def _common(p: argparse.ArgumentParser, config_required: bool = False) -> None:
    p.add_argument("--config", metavar="PATH", required=config_required, help="experiment config file")
    p.add_argument("--out", metavar="DIR", help="output directory (beats $SCALINGLAB_OUT and the config)")
    p.add_argument("--seed-list", metavar="S1,S2,...", help="comma separated seeds (default 101..105)")
    p.add_argument("--threads", type=int, default=1, metavar="N", help="concurrent independent runs")
    p.add_argument("--no-plots", action="store_true", help="skip SVG output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scalinglab", description="Scale-time tradeoff experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("run", help="run whatever experiment a config file names"), config_required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        _common(p)
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one experiment parameter (repeatable)")
    return parser


def resolve(args: argparse.Namespace):
    """Turn parsed arguments into an ExperimentConfig."""
    if args.config:
        cfg = load_config(args.config, output_dir=args.out, seeds=args.seed_list, threads=args.threads)
        overrides = _pairs(getattr(args, "set", []))
        if args.command != "run" and args.command != cfg.experiment:
            raise ScalingLabError(f"config names {cfg.experiment!r} but the subcommand is {args.command!r}")
        if overrides or args.no_plots:
            cfg = build_config(cfg.experiment, {**cfg.raw, **overrides}, seeds=cfg.seeds, output_dir=cfg.output_dir,
                               plots=cfg.plots and not args.no_plots, threads=cfg.threads)
        return cfg
    return build_config(args.command, _pairs(args.set), seeds=args.seed_list, output_dir=args.out,
                        plots=not args.no_plots, threads=args.threads)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args)
        files = execute(cfg)
    except argparse.ArgumentTypeError as exc:
        parser.error(str(exc))
    except ScalingLabError as exc:
        print(f"scalinglab: error: {exc}", file=sys.stderr)
        return 2
    for f in files:
        print(f)
    return 0


if __name__ == "__main__":
    sys.exit(main())
