"""Command-line entry point.

Exit codes: 0 success, 2 configuration or missing-artifact error, 3 numerical
failure, 4 rank deficiency or singular Gramian.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import pipeline
from .config import RunConfig, load_config
from .errors import BifiError, ConfigError

COMMANDS = ("offline", "online", "evaluate", "energy-study", "convergence-study")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bifivfp", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="YAML run configuration (defaults if omitted)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="override sampling seed")
    p.add_argument("--workers", type=int, help="worker processes")
    p.add_argument("--epsilon", type=float, help="override Stokes number")
    p.add_argument("--z", help="online: comma-separated parameter vector")
    p.add_argument("--samples", help="online: JSON file with a list of parameter vectors")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config)
    changes = {}
    if args.out is not None:
        changes["run__out"] = args.out
    if args.seed is not None:
        changes["sampling__seed"] = args.seed
    if args.workers is not None:
        changes["run__workers"] = args.workers
    if args.epsilon is not None:
        changes["model__epsilon"] = args.epsilon
    return cfg.override(**changes) if changes else cfg


def _queries(args):
    if args.z and args.samples:
        raise ConfigError("give either --z or --samples, not both")
    if args.z:
        try:
            return [np.array([float(v) for v in args.z.split(",")])]
        except ValueError:
            raise ConfigError(f"cannot parse --z {args.z!r}") from None
    if args.samples:
        try:
            with open(args.samples) as fh:
                return [np.asarray(z, dtype=float) for z in json.load(fh)]
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read samples file: {exc}") from None
    return None


def _print_rows(rows) -> None:
    for r in rows:
        print(f"K={r['K']:3d} {r['component']:6s} err_bi={r['err_bi']:.4e} err_lo={r['err_lo']:.4e} ratio={r['err_ratio']:.3f}")


def run(args) -> int:
    cfg = resolve_config(args)
    if args.command == "offline":
        model = pipeline.cmd_offline(cfg)
        nodes = pipeline.read_manifest(cfg.out)["stages"]["offline"]["nodes"]
        print(f"selected nodes {nodes}; Gramian condition number {model.condition_number():.3e}")
    elif args.command == "online":
        res = pipeline.cmd_online(cfg, _queries(args))
        print(f"{len(res.snapshots)} bi-fidelity snapshots written to {cfg.out / 'online'}")
        print(f"online time / low-fidelity run time = {res.overhead_ratio:.3f}")
    elif args.command == "evaluate":
        _print_rows(pipeline.cmd_evaluate(cfg))
    elif args.command == "convergence-study":
        _print_rows(pipeline.cmd_convergence_study(cfg))
    elif args.command == "energy-study":
        for rep in pipeline.cmd_energy_study(cfg):
            print(f"E2(0)={rep.E[0, 2]:.4e} decay_rate={rep.decay_rate:.4f} R2={rep.r_squared:.4f} monotone={rep.monotone}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return run(args)
    except BifiError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
