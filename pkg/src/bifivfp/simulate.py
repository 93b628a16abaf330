"""Single-sample runs at each fidelity, returning moment snapshots."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import lofi
from .grid import Grid, ModelParams
from .kinetic import KineticState, integrate, species_density, species_momentum
from .lofi import FluidState, LoFiKind
from .random_inputs import InitialDataSpec, InitialReport, ParameterSample, build_initial_state, make_kl_field
from .snapshot import Snapshot

HI = "hi"
LO = "lo"


@dataclass
class Problem:
    """Everything a single run needs besides the parameter vector."""

    params: ModelParams
    grid: Grid
    init: InitialDataSpec
    t_final: float = 0.1
    cfl: float = 0.5

    @property
    def z_dim(self) -> int:
        return self.init.z_dim(self.params)


def make_problem(
    params: ModelParams | None = None,
    grid: Grid | None = None,
    profile: str = "volcano",
    ell: float = 0.08,
    sigma: float = 0.1,
    fraction: float = 0.95,
    periodic: bool = True,
    amplitude: float | None = None,
    t_final: float = 0.1,
    cfl: float = 0.5,
) -> Problem:
    params = params or ModelParams()
    grid = grid or Grid(dim=params.dim)
    kl = None
    if profile != "equilibrium":
        kl = make_kl_field(grid, ell, sigma, fraction, periodic)
    return Problem(params, grid, InitialDataSpec(profile, kl, amplitude), t_final, cfl)


def component_names(dim: int) -> tuple[str, ...]:
    """Primary moment components used by the bi-fidelity machinery."""
    return ("rho", "mom_x", "mom_y")[: 1 + dim]


AXES = ("x", "y")


def diagnostic_names(params: ModelParams, dim: int) -> tuple[str, ...]:
    names = [f"n_{i}" for i in params.species]
    names += [f"up_{i}_{AXES[a]}" for i in params.species for a in range(dim)]
    names += [f"u_{AXES[a]}" for a in range(dim)]
    return tuple(names)


def _fields(rho, mom, n, u_p, u) -> dict:
    """Primary moments followed by per-species densities, bulk velocities and fluid velocity."""
    dim = mom.shape[0]
    out = {"rho": rho}
    for a, name in enumerate(component_names(dim)[1:]):
        out[name] = mom[a]
    for idx in range(n.shape[0]):
        out[f"n_{idx + 1}"] = n[idx]
    for idx in range(n.shape[0]):
        for a in range(dim):
            out[f"up_{idx + 1}_{AXES[a]}"] = u_p[idx, a]
    for a in range(dim):
        out[f"u_{AXES[a]}"] = u[a]
    return out


def _sizes(params: ModelParams, dim: int) -> np.ndarray:
    return np.arange(1, params.n_species + 1).reshape((-1,) + (1,) * dim)


def kinetic_snapshot(state: KineticState, params: ModelParams, grid: Grid, z, fidelity: str, meta=None) -> Snapshot:
    n = species_density(state.F, grid)
    rho_i = _sizes(params, grid.dim) * n
    J = species_momentum(state.F, params, grid)
    safe = np.where(rho_i > 0, rho_i, 1.0)
    u_p = np.where(rho_i[:, None] > 0, J / safe[:, None], 0.0)
    fields = _fields(rho_i.sum(axis=0), J.sum(axis=0), n, u_p, state.u)
    return Snapshot.from_fields(fields, grid.cell_volume, z, fidelity, meta)


def fluid_snapshot(state: FluidState, params: ModelParams, grid: Grid, z, fidelity: str, meta=None) -> Snapshot:
    rho = (_sizes(params, grid.dim) * state.n).sum(axis=0)
    u_p = np.stack([state.u] * params.n_species)
    fields = _fields(rho, rho * state.u, state.n, u_p, state.u)
    return Snapshot.from_fields(fields, grid.cell_volume, z, fidelity, meta)


def _z_of(z) -> np.ndarray:
    return np.asarray(z.z if isinstance(z, ParameterSample) else z, dtype=float)


def run_kinetic(z, problem: Problem, grid: Grid | None = None, n_checkpoints: int = 0, callback=None,
                sample_id=None, dt: float | None = None):
    """Kinetic run on ``grid`` (default: the problem grid); returns ``(state, report)``."""
    grid = grid or problem.grid
    report = InitialReport()
    state = build_initial_state(problem.init, _z_of(z), problem.params, grid, report)
    state = integrate(
        state, problem.params, grid, problem.t_final, cfl=problem.cfl,
        n_checkpoints=n_checkpoints, callback=callback, sample_id=sample_id, dt=dt,
    )
    return state, report


def run_high_fidelity(z, problem: Problem, sample_id=None) -> Snapshot:
    t0 = time.perf_counter()
    state, report = run_kinetic(z, problem, sample_id=sample_id)
    meta = {
        "model": "kinetic",
        "grid": problem.grid.to_dict(),
        "clamped_points": report.clamped_points,
        "runtime_s": time.perf_counter() - t0,
    }
    return kinetic_snapshot(state, problem.params, problem.grid, _z_of(z), HI, meta)


def initial_fluid_state(z, problem: Problem, grid: Grid, report: InitialReport | None = None) -> FluidState:
    """Hydrodynamic data consistent with the kinetic initial state on ``grid``."""
    params = problem.params
    kin = build_initial_state(problem.init, _z_of(z), params, grid, report)
    n = species_density(kin.F, grid)
    m = kin.u + params.kappa * species_momentum(kin.F, params, grid).sum(axis=0)
    return lofi.hydro_from_moments(n, m, params, grid)


def run_hydro(z, problem: Problem, grid: Grid | None = None, sample_id=None, dt: float | None = None):
    grid = grid or problem.grid
    report = InitialReport()
    state = initial_fluid_state(z, problem, grid, report)
    state = lofi.integrate_hydro(state, problem.params, grid, problem.t_final, problem.cfl, dt=dt, sample_id=sample_id)
    return state, report


def run_acoustic(z, problem: Problem, grid: Grid | None = None, n_steps: int = 1):
    """Linearised model about the uniform rest state, amplitude ``params.delta``."""
    grid = grid or problem.grid
    report = InitialReport()
    delta = problem.params.delta
    state = lofi.linearize(initial_fluid_state(z, problem, grid, report), problem.params, grid, delta)
    dt = problem.t_final / n_steps
    for _ in range(n_steps):
        state = lofi.step_acoustic(state, problem.params, grid, dt)
    return lofi.delinearize(state, grid, delta), report


def run_low_fidelity(z, problem: Problem, kind: LoFiKind, sample_id=None) -> Snapshot:
    grid = kind.grid_for(problem.grid)
    t0 = time.perf_counter()
    if kind.kind == "coarse":
        state, report = run_kinetic(z, problem, grid, sample_id=sample_id)
        make = kinetic_snapshot
    elif kind.kind == "hydro":
        state, report = run_hydro(z, problem, grid, sample_id=sample_id)
        make = fluid_snapshot
    else:
        state, report = run_acoustic(z, problem, grid)
        make = fluid_snapshot
    meta = {
        "model": kind.label(),
        "kind": kind.to_dict(),
        "grid": grid.to_dict(),
        "clamped_points": report.clamped_points,
        "runtime_s": time.perf_counter() - t0,
    }
    return make(state, problem.params, grid, _z_of(z), LO, meta)
