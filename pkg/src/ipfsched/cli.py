"""Command-line entry point: ``ipfsched {optimize,trace,gain,evaluate}``."""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from ipfsched.config import ExperimentConfig
from ipfsched.estimator import UnevaluableScheduleError
from ipfsched.experiments import cmd_evaluate, cmd_gain, cmd_optimize, cmd_trace
from ipfsched.optimizer import PopulationExtinctError
from ipfsched.schedule import parse_schedule

EXIT_CONFIG = 2
EXIT_EXTINCT = 3
EXIT_UNEVALUABLE = 4

log = logging.getLogger("ipfsched")


def _common_flags() -> argparse.ArgumentParser:
    # SUPPRESS lets the flags appear before or after the subcommand
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=argparse.SUPPRESS, help="JSON experiment config")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed")
    p.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    p.add_argument("--workers", type=int, default=argparse.SUPPRESS, help="worker processes")
    p.add_argument("--set", dest="overrides", action="append", default=argparse.SUPPRESS,
                   metavar="KEY=VALUE", help="override a config entry, e.g. ga.generations=10")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(
        prog="ipfsched",
        description="Choose measurement times for an intermittent particle filter.",
        parents=[common],
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("optimize", parents=[common],
                   help="run the genetic algorithm and random trials at equal budget")

    p = sub.add_parser("trace", parents=[common], help="filter one draw under two schedules")
    p.add_argument("--schedule-a", required=True, help="comma list, 'regular' or @file")
    p.add_argument("--schedule-b", default="regular", help="reference schedule (default: regular)")
    p.add_argument("--same-filter-seed", action="store_true",
                   help="filter both schedules with the same particle noise")

    p = sub.add_parser("gain", parents=[common], help="paired relative-gain histogram")
    p.add_argument("--opt", required=True, help="optimised schedule: comma list, 'regular' or @file")
    p.add_argument("--ref", default="regular", help="reference schedule (default: regular)")

    p = sub.add_parser("evaluate", parents=[common], help="Monte Carlo cost of one schedule")
    p.add_argument("--schedule", required=True, help="comma list, 'regular' or @file")
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    config = ExperimentConfig.load(args.config) if getattr(args, "config", None) else ExperimentConfig()
    config = config.with_overrides(getattr(args, "overrides", []))
    changes = {k: getattr(args, k) for k in ("seed", "out", "workers") if hasattr(args, k)}
    return ExperimentConfig.from_dict({**config.to_dict(), **changes})


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = load_config(args)
        T, N = config.horizon, config.budget
        if args.command == "optimize":
            summary = cmd_optimize(config)
            print(f"GA schedule:  {summary['ga']['schedule']}  cost {summary['ga']['cost']:.6g}")
            print(f"RT schedule:  {summary['random_trials']['schedule']}  "
                  f"cost {summary['random_trials']['cost']:.6g}")
        elif args.command == "trace":
            summary = cmd_trace(config, parse_schedule(args.schedule_a, T, N),
                                parse_schedule(args.schedule_b, T, N),
                                same_filter_seed=args.same_filter_seed)
            gain = summary["gain"]
            print("single-draw gain: " + ("undefined (degenerate filter run)" if gain is None
                                          else f"{gain:.4f}"))
        elif args.command == "gain":
            summary = cmd_gain(config, parse_schedule(args.opt, T, N), parse_schedule(args.ref, T, N))
            if summary["mean_gain"] is None:
                print("no valid draws: every draw degenerated")
            else:
                print(f"mean gain {summary['mean_gain']:.4f}, positive in "
                      f"{summary['fraction_positive']:.1%} of {summary['valid_draws']} draws "
                      f"({summary['degenerate_draws']} degenerate draws excluded)")
        else:
            summary = cmd_evaluate(config, parse_schedule(args.schedule, T, N))
            print(f"expected MSE {summary['cost']:.6g} +/- {summary['standard_error']:.3g} "
                  f"({summary['degenerate_draws']} degenerate draws excluded)")
    except PopulationExtinctError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_EXTINCT
    except UnevaluableScheduleError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_UNEVALUABLE
    except (ValueError, OSError) as err:
        print(f"error: invalid configuration or arguments: {err}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
