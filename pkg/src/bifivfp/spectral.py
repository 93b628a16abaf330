"""FFT-based operators on the periodic grid: Leray projection, implicit heat
solves and the variable-density projection used by the hydrodynamic model.

Vector fields are stored as arrays of shape ``(dim, *grid.x_shape)``.
"""
from __future__ import annotations

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .errors import ProjectionError
from .grid import Grid

PROJECTION_TOL = 1e-12


def _fft(u: np.ndarray, dim: int) -> np.ndarray:
    return np.fft.fftn(u, axes=tuple(range(-dim, 0)))


def _ifft(u_hat: np.ndarray, dim: int) -> np.ndarray:
    return np.fft.ifftn(u_hat, axes=tuple(range(-dim, 0))).real


def _k_sq(grid: Grid) -> np.ndarray:
    return sum(k**2 for k in grid.wavenumbers)


def leray_project(u: np.ndarray, grid: Grid) -> np.ndarray:
    """Divergence-free part of ``u``; the spatial mean is kept untouched.

    In one dimension the only periodic solenoidal fields are constants, so this
    reduces to the cell average.
    """
    if grid.dim == 1:
        return np.broadcast_to(u.mean(axis=-1, keepdims=True), u.shape).copy()
    k = grid.deriv_wavenumbers
    k2 = sum(kk**2 for kk in k)
    k2_safe = np.where(k2 == 0.0, 1.0, k2)
    u_hat = _fft(u, grid.dim)
    k_dot_u = sum(k[a] * u_hat[a] for a in range(grid.dim))
    out = np.empty_like(u_hat)
    for a in range(grid.dim):
        out[a] = u_hat[a] - k[a] * k_dot_u / k2_safe
    return _ifft(out, grid.dim)


def divergence(u: np.ndarray, grid: Grid) -> np.ndarray:
    """Spectral divergence (consistent with :func:`leray_project`)."""
    u_hat = _fft(u, grid.dim)
    k = grid.deriv_wavenumbers
    div_hat = sum(1j * k[a] * u_hat[a] for a in range(grid.dim))
    return _ifft(div_hat, grid.dim)


def relative_divergence(u: np.ndarray, grid: Grid) -> float:
    scale = float(np.max(np.abs(u)))
    if scale == 0.0:
        return 0.0
    k_max = np.pi / grid.dx
    return float(np.max(np.abs(divergence(u, grid)))) / (k_max * scale)


def heat_solve(u: np.ndarray, grid: Grid, coeff: float) -> np.ndarray:
    """Backward-Euler heat step: solve ``(I - coeff * Laplacian) w = u``."""
    if coeff == 0.0:
        return u.copy()
    u_hat = _fft(u, grid.dim)
    return _ifft(u_hat / (1.0 + coeff * _k_sq(grid)), grid.dim)


def heat_exact(u: np.ndarray, grid: Grid, coeff: float) -> np.ndarray:
    """Exact heat propagator ``exp(coeff * Laplacian) u``."""
    u_hat = _fft(u, grid.dim)
    return _ifft(u_hat * np.exp(-coeff * _k_sq(grid)), grid.dim)


def laplacian(u: np.ndarray, grid: Grid) -> np.ndarray:
    return _ifft(-_k_sq(grid) * _fft(u, grid.dim), grid.dim)


def variable_density_project(
    m: np.ndarray, a: np.ndarray, grid: Grid, visc_dt: float = 0.0, tol: float = PROJECTION_TOL
) -> np.ndarray:
    """Solenoidal velocity ``u`` with ``P(a u) - visc_dt * Lap u = P(m)``.

    ``a > 0`` is the composite density ``1 + kappa * rho``.  The spatial
    integral of ``a u`` equals that of ``m``, so mixture momentum is preserved.
    """
    if grid.dim == 1:
        u0 = np.sum(m, axis=-1) / np.sum(a)
        return np.broadcast_to(u0[:, None], m.shape).copy()

    shape = m.shape
    a_mean = float(a.mean())
    k2 = _k_sq(grid)

    def apply(flat):
        u = flat.reshape(shape)
        return (leray_project(a * u, grid) - visc_dt * laplacian(u, grid)).ravel()

    def precond(flat):
        r = flat.reshape(shape)
        r_hat = _fft(r, grid.dim)
        return _ifft(r_hat / (a_mean + visc_dt * k2), grid.dim).ravel()

    n = m.size
    op = LinearOperator((n, n), matvec=apply, dtype=float)
    pc = LinearOperator((n, n), matvec=precond, dtype=float)
    rhs = leray_project(m, grid).ravel()
    x0 = leray_project(m / a, grid).ravel()
    sol, info = cg(op, rhs, x0=x0, rtol=tol, atol=0.0, M=pc, maxiter=500)
    rhs_norm = np.linalg.norm(rhs)
    resid = np.linalg.norm(apply(sol) - rhs) / (rhs_norm if rhs_norm > 0 else 1.0)
    if info != 0 and resid > 10 * tol:
        raise ProjectionError(resid)
    return leray_project(sol.reshape(shape), grid)
