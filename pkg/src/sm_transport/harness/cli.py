"""Command-line entry point: ``sm-transport run`` and ``sm-transport summarize``."""

from __future__ import annotations

import argparse
import json
import sys

from ..errors import ConfigurationError
from .config import DEFAULT_CONFIG, ScenarioConfig
from .runner import run_scenario, summarize


def _levels(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sm-transport",
                                     description="Refinement studies for pathwise transport equations.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario config")
    run.add_argument("config", nargs="?", default=str(DEFAULT_CONFIG),
                     help="YAML scenario file (default: the shipped reference config)")
    run.add_argument("--seed-override", type=int, default=None,
                     help="replace noise.base_seed; every study seed shifts with it")
    run.add_argument("--levels", type=_levels, default=None,
                     help="comma-separated ladder levels for the residual study, e.g. 256,512,1024")
    run.add_argument("--out", default=None, help="output directory (default: config output_dir)")
    run.add_argument("--quiet", action="store_true", help="suppress per-study progress lines")

    summ = sub.add_parser("summarize", help="tabulate every summary.json below a directory")
    summ.add_argument("directory")
    summ.add_argument("--json", dest="json_path", default=None,
                      help="also write the aggregated JSON here ('-' for stdout)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        try:
            cfg = ScenarioConfig.load(args.config)
            changes = {}
            if args.seed_override is not None:
                changes["noise.base_seed"] = args.seed_override
            if args.levels is not None:
                changes["ladder.levels"] = args.levels
            if changes:
                cfg = cfg.replace(**changes)
        except ConfigurationError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        log = None if args.quiet else print
        result = run_scenario(cfg, args.out, log=log)
        if result.passed:
            print(f"{cfg.name}: all gates passed")
        else:
            print(f"{cfg.name}: failed gates: {', '.join(result.failed_gates)}")
        return 0 if result.passed else 1

    table, data = summarize(args.directory)
    print(table)
    if args.json_path == "-":
        print(json.dumps(data, indent=2, sort_keys=True))
    elif args.json_path:
        with open(args.json_path, "w") as fh:
            fh.write(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
