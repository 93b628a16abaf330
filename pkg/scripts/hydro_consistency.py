"""Gap between kinetic moments and the hydrodynamic-limit solver as epsilon shrinks."""
import argparse

from bifivfp.grid import ModelParams
from bifivfp.lofi import LoFiKind
from bifivfp.random_inputs import draw_samples
from bifivfp.simulate import make_problem, run_high_fidelity, run_low_fidelity


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--epsilon", type=float, nargs="+", default=[1e-1, 1e-2, 1e-3])
    ap.add_argument("--profile", default="near_equilibrium")
    ap.add_argument("--seed", type=int, default=3)
    args = ap.parse_args()
    for eps in args.epsilon:
        p = make_problem(ModelParams(epsilon=eps), profile=args.profile)
        z = draw_samples(1, p.z_dim, seed=args.seed)[0].z
        kin = run_high_fidelity(z, p).select(("rho", "mom_x"))
        hyd = run_low_fidelity(z, p, LoFiKind("hydro", 1)).select(("rho", "mom_x"))
        print(f"eps={eps:8.0e}  L2 gap={kin.with_values(kin.values - hyd.values).norm():.4e}")


if __name__ == "__main__":
    main()
