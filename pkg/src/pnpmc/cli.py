"""Command line entry point.

    pnpmc run <config>
    pnpmc sweep <config> --param gamma --values 1.6,0.8,0.4
    pnpmc validate <config>

Outputs go to the config's ``output_dir``; a relative path is resolved
against ``$PNPMC_OUTPUT_ROOT`` (default: the working directory).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .core import ContractError
from .experiments import load_config, run_experiment, seed_sweep, validate


def _values(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad value list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pnpmc", description="Plug-and-play Monte Carlo experiments")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("config")

    sw = sub.add_parser("sweep", help="sweep one parameter over random posteriors")
    sw.add_argument("config")
    sw.add_argument("--param", required=True, choices=["gamma", "sigma_min", "eps_max"])
    sw.add_argument("--values", required=True, type=_values)
    sw.add_argument("--realizations", type=int, default=None,
                    help="number of random posteriors (default: from the config)")

    val = sub.add_parser("validate", help="check a config without sampling")
    val.add_argument("config")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.command == "validate":
            print(json.dumps(validate(cfg), indent=2))
        elif args.command == "run":
            res = run_experiment(cfg)
            for w in res.warnings:
                print(f"warning: {w}", file=sys.stderr)
            print(res.output_dir)
        else:
            out = seed_sweep(cfg, args.param, args.values, args.realizations)
            for row in out["summary"]:
                print(f"{row['param']}={row['value']:g}  min_fi={row['min_fi']:.4f}  "
                      f"min_kl={row['min_kl']:.4f}")
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
