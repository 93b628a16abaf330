"""High-fidelity Vlasov-Fokker-Planck / incompressible Navier-Stokes solver.

One time step is a first-order splitting:

1. explicit upwind free transport ``v . grad_x F_i``;
2. explicit convection of the fluid (2D only; 1D solenoidal fields are constant);
3. implicit, per-cell coupling of drag and Fokker-Planck relaxation.  The
   stiff momentum exchange is solved in closed form from the moment system,
   then each species is relaxed with a backward-Euler Fokker-Planck step whose
   discretisation (Scharfetter-Gummel flux) keeps the shifted Maxwellian as
   its exact discrete kernel.  The fluid velocity is then reset from the
   particle momentum change so that ``u + kappa * sum_i J_i`` is conserved to
   round-off;
4. implicit viscosity and FFT pressure projection.

Stages 3-4 put no restriction on ``dt``, so the step is stable uniformly in
the Stokes number; stage 1 needs the transport CFL condition.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import spectral
from .errors import CFLViolation, NonFiniteState
from .grid import Grid, ModelParams

DEFAULT_CFL = 0.5


@dataclass
class KineticState:
    """Phase-space state.

    ``F`` has shape ``(N, *x_shape, *v_shape)``, ``u`` has shape
    ``(dim, *x_shape)`` and ``p`` has shape ``x_shape``.
    """

    F: np.ndarray
    u: np.ndarray
    p: np.ndarray
    t: float = 0.0

    def copy(self) -> "KineticState":
        return KineticState(self.F.copy(), self.u.copy(), self.p.copy(), self.t)


@dataclass
class MomentSet:
    n: np.ndarray  # (N, *x)
    J: np.ndarray  # (N, dim, *x)
    P: np.ndarray  # (N, dim, dim, *x)
    rho: np.ndarray  # (*x)

    @property
    def rho_i(self) -> np.ndarray:
        sizes = np.arange(1, self.n.shape[0] + 1).reshape((-1,) + (1,) * (self.n.ndim - 1))
        return sizes * self.n


def _gaussian(i: int, params: ModelParams, grid: Grid, shift=None) -> np.ndarray:
    """Unit-mass Gaussian with variance ``theta_bar / i`` per component.

    With ``shift`` of shape ``(dim, *x)`` the result has shape ``(*x, *v)``.
    """
    temp = params.theta_bar / i
    norm = (2.0 * np.pi * temp) ** (-grid.dim / 2.0)
    if shift is None:
        return norm * np.exp(-grid.v_sq / (2.0 * temp))
    d = grid.dim
    xs = shift.shape[1:]
    sq = np.zeros(xs + grid.v_shape)
    for a in range(d):
        va = grid.v_mesh[a].reshape((1,) * d + grid.v_shape)
        ua = shift[a].reshape(xs + (1,) * d)
        sq = sq + (va - ua) ** 2
    return norm * np.exp(-sq / (2.0 * temp))


def maxwellian(species_index: int, params: ModelParams, grid: Grid) -> np.ndarray:
    """Global equilibrium ``mu_i(v)``, normalised to unit mass over ``X x R^d``."""
    if not 1 <= species_index <= params.n_species:
        raise ValueError(f"species index {species_index} outside 1..{params.n_species}")
    return (1.0 / grid.volume) * _gaussian(species_index, params, grid)


def local_maxwellian(
    species_index: int, n: np.ndarray, u_p: np.ndarray, params: ModelParams, grid: Grid
) -> np.ndarray:
    """``n(x) * M_i(v - u_p(x))`` on the phase-space grid."""
    g = _gaussian(species_index, params, grid, shift=u_p)
    return n.reshape(n.shape + (1,) * grid.dim) * g


def equilibrium_state(params: ModelParams, grid: Grid) -> KineticState:
    n = np.full(grid.x_shape, 1.0 / grid.volume)
    zero_u = np.zeros((grid.dim,) + grid.x_shape)
    F = np.stack([local_maxwellian(i, n, zero_u, params, grid) for i in params.species])
    return KineticState(F, zero_u.copy(), np.zeros(grid.x_shape), 0.0)


def _vsum(a: np.ndarray, grid: Grid) -> np.ndarray:
    axes = tuple(range(-grid.dim, 0))
    return a.sum(axis=axes) * grid.dv_volume


def species_density(F: np.ndarray, grid: Grid) -> np.ndarray:
    return _vsum(F, grid)


def species_momentum(F: np.ndarray, params: ModelParams, grid: Grid) -> np.ndarray:
    """``J_i = i * int v F_i dv`` with shape ``(N, dim, *x)``."""
    d = grid.dim
    sizes = np.arange(1, F.shape[0] + 1, dtype=float)
    J = np.stack([_vsum(F * grid.v_mesh[a], grid) for a in range(d)], axis=1)
    return J * sizes.reshape((-1, 1) + (1,) * d)


def moments(state: KineticState, params: ModelParams, grid: Grid) -> MomentSet:
    F = state.F
    d = grid.dim
    n = species_density(F, grid)
    J = species_momentum(F, params, grid)
    sizes = np.arange(1, F.shape[0] + 1, dtype=float).reshape((-1,) + (1,) * d)
    P = np.empty((F.shape[0], d, d) + grid.x_shape)
    for a in range(d):
        for b in range(d):
            P[:, a, b] = sizes * _vsum(F * (grid.v_mesh[a] * grid.v_mesh[b]), grid)
    rho = (sizes * n).sum(axis=0)
    return MomentSet(n=n, J=J, P=P, rho=rho)


def total_momentum(state: KineticState, params: ModelParams, grid: Grid) -> np.ndarray:
    """``int u dx + kappa * sum_i int J_i dx`` (one entry per direction)."""
    J = species_momentum(state.F, params, grid)
    axes = tuple(range(-grid.dim, 0))
    fluid = state.u.sum(axis=axes) * grid.cell_volume
    part = J.sum(axis=0).sum(axis=axes) * grid.cell_volume
    return fluid + params.kappa * part


def species_mass(state: KineticState, grid: Grid) -> np.ndarray:
    axes = tuple(range(1, 1 + 2 * grid.dim))
    return state.F.sum(axis=axes) * grid.cell_volume * grid.dv_volume


def momentum_scale(state: KineticState, params: ModelParams, grid: Grid) -> float:
    """Magnitude used to normalise momentum drift when the net momentum is ~0."""
    sizes = np.arange(1, state.F.shape[0] + 1).reshape((-1,) + (1,) * (2 * grid.dim))
    speed = np.sqrt(grid.v_sq)
    part = float((sizes * state.F * speed).sum()) * grid.cell_volume * grid.dv_volume
    fluid = float(np.sqrt((state.u**2).sum(axis=0)).sum()) * grid.cell_volume
    return fluid + params.kappa * part


def max_stable_dt(state: KineticState, grid: Grid) -> float:
    speed = max(float(np.max(np.abs(grid.v))), float(np.max(np.abs(state.u))))
    return grid.dx / (grid.dim * speed)


def default_dt(state: KineticState, grid: Grid, cfl: float = DEFAULT_CFL) -> float:
    speed = max(float(np.max(np.abs(grid.v))), float(np.max(np.abs(state.u))))
    return cfl * grid.dx / speed


# ---------------------------------------------------------------- transport


def transport(F: np.ndarray, grid: Grid, dt: float) -> np.ndarray:
    """First-order upwind step for ``F_t + v . grad_x F = 0`` (flux form)."""
    d = grid.dim
    out = F.copy()
    lam = dt / grid.dx
    for a in range(d):
        xa = 1 + a  # spatial axis in F
        va = grid.v_mesh[a].reshape((1,) * (1 + d) + grid.v_shape)
        vp = np.maximum(va, 0.0)
        vm = np.minimum(va, 0.0)
        flux = vp * F + vm * np.roll(F, -1, axis=xa)  # at k + 1/2
        out -= lam * (flux - np.roll(flux, 1, axis=xa))
    return out


def _convection(u: np.ndarray, grid: Grid) -> np.ndarray:
    """Conservative ``Div(u (x) u)`` by pseudo-spectral differentiation."""
    d = grid.dim
    k = grid.deriv_wavenumbers
    axes = tuple(range(-d, 0))
    out = np.zeros_like(u)
    for b in range(d):
        acc = 0.0
        for a in range(d):
            acc = acc + 1j * k[a] * np.fft.fftn(u[a] * u[b], axes=axes)
        out[b] = np.fft.ifftn(acc, axes=axes).real
    return out


# -------------------------------------------------------- Fokker-Planck part


def _fp_coefficients(u_a: np.ndarray, i: int, params: ModelParams, grid: Grid, dt: float):
    """Tridiagonal bands of ``I - dt * A_i(u)`` along one velocity axis.

    ``u_a`` has shape ``(ncells,)``; the bands have shape ``(ncells, n_v)``.
    """
    temp = params.theta_bar / i
    rate = 1.0 / (params.epsilon * i ** (2.0 / 3.0))
    c = dt * rate * temp / grid.dv**2
    v_half = grid.v[:-1] + 0.5 * grid.dv  # interior interfaces
    beta = (v_half[None, :] - u_a[:, None]) * grid.dv / (2.0 * temp)
    up = c * np.exp(beta)  # coefficient of F_{j+1} in flux_{j+1/2}
    dn = c * np.exp(-beta)  # coefficient of F_j in flux_{j+1/2}
    ncell, nv = u_a.shape[0], grid.n_v
    diag = np.ones((ncell, nv))
    diag[:, :-1] += dn
    diag[:, 1:] += up
    sup = np.zeros((ncell, nv))
    sub = np.zeros((ncell, nv))
    sup[:, :-1] = -up  # row j, column j+1
    sub[:, 1:] = -dn  # row j, column j-1
    return sub, diag, sup


def _thomas(sub, diag, sup, rhs):
    """Batched tridiagonal solve.  ``rhs`` has shape ``(ncells, n_v, ncols)``.

    The matrices are column diagonally dominant M-matrices, so elimination
    without pivoting is stable and maps non-negative data to non-negative data.
    """
    n = diag.shape[1]
    cp = np.empty_like(diag)
    dp = np.empty_like(rhs)
    cp[:, 0] = sup[:, 0] / diag[:, 0]
    dp[:, 0] = rhs[:, 0] / diag[:, 0, None]
    for j in range(1, n):
        denom = diag[:, j] - sub[:, j] * cp[:, j - 1]
        cp[:, j] = sup[:, j] / denom
        dp[:, j] = (rhs[:, j] - sub[:, j, None] * dp[:, j - 1]) / denom[:, None]
    x = np.empty_like(rhs)
    x[:, -1] = dp[:, -1]
    for j in range(n - 2, -1, -1):
        x[:, j] = dp[:, j] - cp[:, j, None] * x[:, j + 1]
    return x


def fokker_planck_implicit(
    Fi: np.ndarray, u: np.ndarray, i: int, params: ModelParams, grid: Grid, dt: float
) -> np.ndarray:
    """Backward-Euler relaxation of one species towards ``M_i(v - u(x))``.

    In 2D the operator is a sum of two commuting one-axis operators and is
    applied as a product of one-axis backward-Euler solves.
    """
    d = grid.dim
    ncell = int(np.prod(grid.x_shape))
    nv = grid.n_v
    out = Fi.reshape((ncell,) + grid.v_shape)
    for a in range(d):
        sub, diag, sup = _fp_coefficients(u[a].reshape(ncell), i, params, grid, dt)
        moved = np.moveaxis(out, 1 + a, 1).reshape(ncell, nv, -1)
        solved = _thomas(sub, diag, sup, moved)
        shape_moved = (ncell, nv) + tuple(np.delete(np.array(grid.v_shape), a))
        out = np.moveaxis(solved.reshape(shape_moved), 1, 1 + a)
    return np.ascontiguousarray(out).reshape(Fi.shape)


def _drag_velocity(u, n, J, params: ModelParams, dt: float) -> np.ndarray:
    """Backward-Euler solution of the stiff momentum-exchange system.

    ``dJ_i/dt = -r_i (J_i - i n_i u)``,
    ``du/dt = kappa * sum_i r_i (J_i - i n_i u)``, ``r_i = 1/(eps i^(2/3))``.
    """
    total = u + params.kappa * J.sum(axis=0)
    num = total.copy()
    den = np.ones_like(n[0])
    for idx, i in enumerate(params.species):
        rdt = dt / (params.epsilon * i ** (2.0 / 3.0))
        num -= params.kappa * J[idx] / (1.0 + rdt)
        den += params.kappa * rdt * i * n[idx] / (1.0 + rdt)
    return num / den


def relax(state_F: np.ndarray, u: np.ndarray, params: ModelParams, grid: Grid, dt: float):
    """Implicit drag + Fokker-Planck stage; returns ``(F, u)``."""
    n = species_density(state_F, grid)
    J = species_momentum(state_F, params, grid)
    total = u + params.kappa * J.sum(axis=0)
    u_star = _drag_velocity(u, n, J, params, dt)
    F_new = np.empty_like(state_F)
    for idx, i in enumerate(params.species):
        F_new[idx] = fokker_planck_implicit(state_F[idx], u_star, i, params, grid, dt)
    J_new = species_momentum(F_new, params, grid)
    u_new = total - params.kappa * J_new.sum(axis=0)
    return F_new, u_new


def _pressure(w: np.ndarray, u_proj: np.ndarray, grid: Grid, dt: float) -> np.ndarray:
    """Pressure whose gradient (times dt) was removed by the projection."""
    g = w - u_proj
    d = grid.dim
    axes = tuple(range(-d, 0))
    k = grid.deriv_wavenumbers
    k2 = sum(kk**2 for kk in k)
    k2_safe = np.where(k2 == 0.0, 1.0, k2)
    g_hat = np.fft.fftn(g, axes=axes)
    phi_hat = -1j * sum(k[a] * g_hat[a] for a in range(d)) / k2_safe
    phi_hat = np.where(k2 == 0.0, 0.0, phi_hat)
    return np.fft.ifftn(phi_hat, axes=axes).real / dt


def step_kinetic(
    state: KineticState, params: ModelParams, grid: Grid, dt: float, check_cfl: bool = True
) -> KineticState:
    """Advance the coupled system by ``dt``."""
    if check_cfl:
        dt_max = max_stable_dt(state, grid)
        if dt > dt_max * (1.0 + 1e-12):
            raise CFLViolation(dt, dt_max)
    F = transport(state.F, grid, dt)
    u = state.u
    if grid.dim > 1:
        u = u - dt * _convection(u, grid)
    F, u = relax(F, u, params, grid, dt)
    w = spectral.heat_solve(u, grid, dt)
    u_new = spectral.leray_project(w, grid)
    p = _pressure(w, u_new, grid, dt)
    return KineticState(F, u_new, p, state.t + dt)


def integrate(
    state: KineticState,
    params: ModelParams,
    grid: Grid,
    t_final: float,
    cfl: float = DEFAULT_CFL,
    n_checkpoints: int = 0,
    callback=None,
    sample_id=None,
    dt: float | None = None,
) -> KineticState:
    """Step to ``t_final`` with a uniform step no larger than the CFL step.

    ``callback(state)`` is invoked at ``n_checkpoints + 1`` evenly spaced
    times including ``t = 0`` and ``t_final``.
    """
    if dt is None:
        dt = default_dt(state, grid, cfl)
    n_steps = max(1, int(np.ceil(t_final / dt - 1e-12)))
    dt = t_final / n_steps
    marks = set()
    if n_checkpoints:
        marks = {int(round(j * n_steps / n_checkpoints)) for j in range(n_checkpoints + 1)}
    if callback is not None and 0 in marks:
        callback(state)
    for step in range(1, n_steps + 1):
        state = step_kinetic(state, params, grid, dt)
        if not np.isfinite(state.u).all() or not np.isfinite(state.F.sum()):
            raise NonFiniteState(sample_id, state.t)
        if callback is not None and step in marks:
            callback(state)
    state.t = float(t_final)
    return state


def n_steps_for(t_final: float, dt: float) -> int:
    return max(1, int(np.ceil(t_final / dt - 1e-12)))
