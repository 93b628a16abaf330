"""Bi-fidelity error against K on the desk configuration, for several Stokes numbers.

    python scripts/desk_convergence.py --epsilon 1 1e-5 --workers 4
"""
import argparse
from pathlib import Path

from bifivfp import pipeline
from bifivfp.config import load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(Path(__file__).parents[1] / "configs" / "desk.yaml"))
    ap.add_argument("--epsilon", type=float, nargs="+", default=[1.0, 1e-5])
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="runs/desk")
    args = ap.parse_args()
    base = load_config(args.config)
    for eps in args.epsilon:
        cfg = base.override(model__epsilon=eps, run__workers=args.workers, run__out=f"{args.out}/eps{eps:g}")
        pipeline.cmd_offline(cfg)
        rows = pipeline.cmd_convergence_study(cfg)
        print(f"\nepsilon = {eps:g}   ({cfg.out / 'convergence.csv'})")
        print(f"{'K':>3} {'component':>9} {'err_bi':>11} {'err_lo':>11} {'ratio':>7}")
        for r in rows:
            print(f"{r['K']:3d} {r['component']:>9} {r['err_bi']:11.4e} {r['err_lo']:11.4e} {r['err_ratio']:7.3f}")


if __name__ == "__main__":
    main()
