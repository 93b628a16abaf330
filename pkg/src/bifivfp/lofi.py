"""Low-fidelity models: the hydrodynamic limit, its linearisation about the
uniform rest state, and grid prolongation for comparing fidelities.

The coarse-mesh kinetic model needs no code of its own; it is the kinetic
solver run on ``Grid.coarsen(factor)`` (see :mod:`bifivfp.simulate`).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import spectral
from .errors import CFLViolation, ConfigError, LayoutMismatch, NonFiniteState
from .grid import Grid, ModelParams
from .snapshot import Snapshot

KINDS = ("coarse", "hydro", "acoustic")
FACTORS = (1, 2, 4)


@dataclass(frozen=True)
class LoFiKind:
    """Which low-fidelity model to run.

    ``factor`` coarsens ``dx`` (and, through the CFL step, ``dt``) for every
    kind; ``n_v`` is never coarsened.
    """

    kind: str = "coarse"
    factor: int = 4

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown low-fidelity kind {self.kind!r}; choose from {KINDS}")
        if self.factor not in FACTORS:
            raise ConfigError(f"coarsening factor must be one of {FACTORS}, got {self.factor}")

    def grid_for(self, hi_grid: Grid) -> Grid:
        return hi_grid.coarsen(self.factor)

    def label(self) -> str:
        return f"{self.kind}{self.factor}"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "factor": self.factor}


@dataclass
class FluidState:
    n: np.ndarray  # (N, *x)
    u: np.ndarray  # (dim, *x)
    p: np.ndarray
    t: float = 0.0

    def copy(self) -> "FluidState":
        return FluidState(self.n.copy(), self.u.copy(), self.p.copy(), self.t)


@dataclass
class AcousticState:
    n_tilde: np.ndarray
    u_tilde: np.ndarray
    p_tilde: np.ndarray
    t: float = 0.0

    def copy(self) -> "AcousticState":
        return AcousticState(self.n_tilde.copy(), self.u_tilde.copy(), self.p_tilde.copy(), self.t)


def _sizes(params: ModelParams, ndim: int) -> np.ndarray:
    return np.arange(1, params.n_species + 1, dtype=float).reshape((-1,) + (1,) * ndim)


def composite_density(n: np.ndarray, params: ModelParams, grid: Grid) -> np.ndarray:
    """``1 + kappa * sum_i i n_i``."""
    return 1.0 + params.kappa * (_sizes(params, grid.dim) * n).sum(axis=0)


# ------------------------------------------------------------- hydro limit


def _upwind_divergence(q: np.ndarray, u: np.ndarray, grid: Grid) -> np.ndarray:
    """Conservative first-order upwind ``div(q u)`` for ``q`` of shape ``(..., *x)``.

    Face velocities are averages of neighbouring cell values.
    """
    d = grid.dim
    out = np.zeros_like(q)
    for a in range(d):
        ax = q.ndim - d + a
        uf = 0.5 * (u[a] + np.roll(u[a], -1, axis=a))
        flux = np.maximum(uf, 0.0) * q + np.minimum(uf, 0.0) * np.roll(q, -1, axis=ax)
        out += (flux - np.roll(flux, 1, axis=ax)) / grid.dx
    return out


def hydro_max_dt(state: FluidState, grid: Grid) -> float:
    speed = float(np.max(np.abs(state.u)))
    return np.inf if speed == 0.0 else grid.dx / (grid.dim * speed)


def hydro_default_dt(state: FluidState, grid: Grid, cfl: float = 0.5) -> float:
    """CFL step with a unit reference speed so that a fluid at rest still advances."""
    return cfl * grid.dx / max(float(np.max(np.abs(state.u))), 1.0)


def _gradient_potential(g: np.ndarray, grid: Grid) -> np.ndarray:
    """Scalar ``phi`` with ``grad phi`` the gradient part of ``g``."""
    d = grid.dim
    axes = tuple(range(-d, 0))
    k = grid.deriv_wavenumbers
    k2 = sum(kk**2 for kk in k)
    k2_safe = np.where(k2 == 0.0, 1.0, k2)
    g_hat = np.fft.fftn(g, axes=axes)
    phi_hat = -1j * sum(k[a] * g_hat[a] for a in range(d)) / k2_safe
    return np.fft.ifftn(np.where(k2 == 0.0, 0.0, phi_hat), axes=axes).real


def step_hydro(state: FluidState, params: ModelParams, grid: Grid, dt: float, check_cfl: bool = True) -> FluidState:
    """Advance the variable-density incompressible Navier-Stokes system.

    Densities and momentum ``(1 + kappa rho) u`` are moved by the same upwind
    flux; viscosity and the pressure (which absorbs ``kappa rho``) are then
    handled implicitly by one variable-density projection.
    """
    if check_cfl:
        dt_max = hydro_max_dt(state, grid)
        if dt > dt_max * (1.0 + 1e-12):
            raise CFLViolation(dt, dt_max)
    a_old = composite_density(state.n, params, grid)
    n_new = state.n - dt * _upwind_divergence(state.n, state.u, grid)
    m = a_old * state.u
    m = m - dt * _upwind_divergence(m, state.u, grid)
    a_new = composite_density(n_new, params, grid)
    u_new = spectral.variable_density_project(m, a_new, grid, visc_dt=dt)
    resid = m - (a_new * u_new - dt * spectral.laplacian(u_new, grid))
    # resid = dt grad(p + kappa rho)
    p = _gradient_potential(resid, grid) / dt - (a_new - 1.0)
    return FluidState(n_new, u_new, p, state.t + dt)


def hydro_from_moments(n: np.ndarray, momentum: np.ndarray, params: ModelParams, grid: Grid) -> FluidState:
    """Hydrodynamic state whose mixture momentum best matches ``momentum``.

    ``momentum`` is the total momentum density ``u + kappa sum_i J_i``.
    """
    a = composite_density(n, params, grid)
    u = spectral.variable_density_project(momentum, a, grid)
    return FluidState(n.copy(), u, np.zeros(grid.x_shape), 0.0)


def integrate_hydro(
    state: FluidState, params: ModelParams, grid: Grid, t_final: float, cfl: float = 0.5,
    dt: float | None = None, sample_id=None,
) -> FluidState:
    if dt is None:
        dt = hydro_default_dt(state, grid, cfl)
    n_steps = max(1, int(np.ceil(t_final / dt - 1e-12)))
    dt = t_final / n_steps
    for _ in range(n_steps):
        state = step_hydro(state, params, grid, dt)
        if not (np.isfinite(state.u).all() and np.isfinite(state.n).all()):
            raise NonFiniteState(sample_id, state.t)
    state.t = float(t_final)
    return state


def hydro_momentum(state: FluidState, params: ModelParams, grid: Grid) -> np.ndarray:
    """Integral of ``(1 + kappa rho) u`` per direction."""
    a = composite_density(state.n, params, grid)
    return (a * state.u).reshape(grid.dim, -1).sum(axis=1) * grid.cell_volume


# ---------------------------------------------------------------- acoustic


def acoustic_rate_factor(params: ModelParams, grid: Grid) -> float:
    """``1 / (1 + kappa sum_i i n0)`` with the uniform background ``n0 = 1/|X|``."""
    n0 = 1.0 / grid.volume
    return 1.0 / (1.0 + params.kappa * n0 * sum(params.species))


def step_acoustic(state: AcousticState, params: ModelParams, grid: Grid, dt: float) -> AcousticState:
    """Exact step of the linearised system.

    With a solenoidal velocity the density perturbations are frozen and the
    velocity obeys a projected heat equation with diffusivity
    :func:`acoustic_rate_factor`; both are solved exactly in Fourier space.
    """
    u = spectral.leray_project(state.u_tilde, grid)
    u = spectral.heat_exact(u, grid, dt * acoustic_rate_factor(params, grid))
    rho_t = (_sizes(params, grid.dim) * state.n_tilde).sum(axis=0)
    p = -params.kappa * (rho_t - rho_t.mean())
    return AcousticState(state.n_tilde.copy(), u, p, state.t + dt)


def linearize(state: FluidState, params: ModelParams, grid: Grid, delta: float) -> AcousticState:
    """Perturbations ``n = n0 (1 + delta n~)``, ``u = delta u~`` about ``n0 = 1/|X|``."""
    n0 = 1.0 / grid.volume
    return AcousticState((state.n / n0 - 1.0) / delta, state.u / delta, np.zeros(grid.x_shape), state.t)


def delinearize(state: AcousticState, grid: Grid, delta: float) -> FluidState:
    n0 = 1.0 / grid.volume
    return FluidState(n0 * (1.0 + delta * state.n_tilde), delta * state.u_tilde, delta * state.p_tilde, state.t)


# ------------------------------------------------------------ prolongation


def _prolong_axis(f: np.ndarray, r: int, axis: int) -> np.ndarray:
    n = f.shape[axis]
    j = np.arange(n * r)
    k, s = np.divmod(j, r)
    w = (s / r).reshape([-1 if ax == axis else 1 for ax in range(f.ndim)])
    lo = np.take(f, k, axis=axis)
    hi = np.take(f, (k + 1) % n, axis=axis)
    return (1.0 - w) * lo + w * hi


def prolong_field(f: np.ndarray, r: int, dim: int) -> np.ndarray:
    """Periodic (bi)linear interpolation of node values by an integer factor."""
    for a in range(dim):
        f = _prolong_axis(f, r, f.ndim - dim + a)
    return f


def prolong(snapshot: Snapshot, target_grid: Grid) -> Snapshot:
    """Interpolate every component onto ``target_grid`` (an integer refinement)."""
    src_n = snapshot.grid_shape[0]
    if len(snapshot.grid_shape) != target_grid.dim or target_grid.n_x % src_n:
        raise LayoutMismatch(
            f"grid {snapshot.grid_shape} is not nested in target with n_x={target_grid.n_x}, dim={target_grid.dim}"
        )
    r = target_grid.n_x // src_n
    if r == 1:
        return snapshot
    fields = {c: prolong_field(snapshot.field(c), r, target_grid.dim) for c in snapshot.components}
    meta = dict(snapshot.meta, prolonged_from=list(snapshot.grid_shape))
    return Snapshot.from_fields(fields, target_grid.cell_volume, snapshot.z, snapshot.fidelity, meta)
