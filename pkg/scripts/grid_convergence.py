"""Observed order of the kinetic scheme against a refined reference run."""
import argparse

import numpy as np

from bifivfp.grid import Grid, ModelParams
from bifivfp.simulate import make_problem, run_high_fidelity


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--profile", default="volcano")
    ap.add_argument("--n-x", type=int, nargs="+", default=[16, 32, 64])
    ap.add_argument("--ref", type=int, default=256)
    args = ap.parse_args()
    runs = {}
    for n in args.n_x + [args.ref]:
        p = make_problem(ModelParams(), Grid(n_x=n), profile=args.profile)
        runs[n] = run_high_fidelity(np.zeros(p.z_dim), p)
    fine = Grid(n_x=args.ref)
    prev = None
    for n in args.n_x:
        c = Grid(n_x=n)
        d = np.concatenate([c.restrict(runs[args.ref].field(k), fine) - runs[n].field(k) for k in ("rho", "mom_x")])
        err = np.sqrt((d**2).sum() * c.cell_volume)
        order = "" if prev is None else f"  order {np.log2(prev / err):.2f}"
        print(f"n_x={n:4d}  error={err:.4e}{order}")
        prev = err


if __name__ == "__main__":
    main()
