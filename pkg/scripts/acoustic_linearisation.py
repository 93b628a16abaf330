"""Hydrodynamic solution versus background plus delta times the linearised solution."""
import argparse

import numpy as np

from bifivfp.grid import Grid, ModelParams
from bifivfp.lofi import AcousticState, delinearize, integrate_hydro, step_acoustic


def gap(dim: int, delta: float, t_final: float) -> float:
    g = Grid(dim=dim, n_x=64 if dim == 1 else 32)
    params = ModelParams(dim=dim)
    x = g.x_mesh
    n_t = np.stack([np.cos(2 * np.pi * x[0]) * (1 + 0.5 * i) for i in params.species])
    if dim == 1:
        u_t, dt = np.ones((1,) + g.x_shape), None
    else:
        # shear mode: exercises viscous decay, which 1D cannot
        u_t, dt = np.stack([np.sin(2 * np.pi * x[1]), np.zeros(g.x_shape)]), 2e-4
    lin = AcousticState(n_t, u_t, np.zeros(g.x_shape))
    hyd = integrate_hydro(delinearize(lin, g, delta), params, g, t_final, dt=dt)
    aco = delinearize(step_acoustic(lin, params, g, t_final), g, delta)
    return float(np.sqrt((((hyd.n - aco.n) ** 2).sum() + ((hyd.u - aco.u) ** 2).sum()) * g.cell_volume))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--delta", type=float, nargs="+", default=[1e-1, 1e-2, 1e-3])
    ap.add_argument("--t-final", type=float, default=0.1)
    args = ap.parse_args()
    for dim in (1, 2):
        gaps = [gap(dim, d, args.t_final) for d in args.delta]
        print(f"{dim}D: " + "  ".join(f"delta={d:.0e}: {e:.3e}" for d, e in zip(args.delta, gaps)))


if __name__ == "__main__":
    main()
