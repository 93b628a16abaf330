"""Karhunen-Loeve random fields, random initial data and parameter sampling."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io, spectral
from .errors import ConfigError, LayoutMismatch, NumericalError
from .grid import Grid, ModelParams
from .kinetic import KineticState, local_maxwellian, species_momentum

DENSITY_FLOOR = 1e-8
EIG_NEG_TOL = 1e-12

STREAMS = {"train": 0, "eval": 1, "test": 2}


# ------------------------------------------------------------------ KL


def _points(grid: Grid) -> np.ndarray:
    return np.stack([m.ravel() for m in grid.x_mesh], axis=1)


def _wrapped_gaussian(d: np.ndarray, ell: float, period: float) -> np.ndarray:
    """Periodised 1D Gaussian ``sum_k exp(-(d + k L)^2 / ell^2)``, scaled to 1 at ``d = 0``.

    The image sum is a valid (positive semidefinite) covariance on the torus,
    unlike the Gaussian of the minimum-image distance.  Short lengths use the
    image sum, long ones the equivalent Fourier series; both converge fast.
    """
    r = ell / period
    if r <= 1.0:
        m = int(np.ceil(6.0 * r)) + 1
        ks = np.arange(-m, m + 1)
        terms = lambda x: np.exp(-((x[..., None] + ks * period) ** 2) / ell**2).sum(axis=-1)
    else:
        ks = np.arange(1, int(np.ceil(2.5 / (np.pi * r))) + 2)
        c = np.exp(-((np.pi * ks * r) ** 2))
        terms = lambda x: 1.0 + 2.0 * (c * np.cos(2 * np.pi * ks * x[..., None] / period)).sum(axis=-1)
    return terms(d) / terms(np.zeros(1))[0]


def _kernel(xa: np.ndarray, xb: np.ndarray, ell: float, period: float | None) -> np.ndarray:
    diff = xa[:, None, :] - xb[None, :, :]
    if period is None:
        return np.exp(-(diff**2).sum(axis=-1) / ell**2)
    return np.prod(_wrapped_gaussian(diff, ell, period), axis=-1)


def assemble_covariance(grid: Grid, ell: float, periodic: bool = True) -> np.ndarray:
    """Gaussian covariance ``exp(-|x_a - x_b|^2 / ell^2)`` between grid points.

    With ``periodic=True`` the kernel is wrapped onto the torus (see
    :func:`_wrapped_gaussian`).
    """
    if not ell > 0:
        raise ConfigError(f"correlation length must be positive, got {ell}")
    pts = _points(grid)
    C = _kernel(pts, pts, ell, grid.x_extent if periodic else None)
    np.fill_diagonal(C, 1.0)
    return C


@dataclass
class KLField:
    """Eigenpairs of the covariance operator on ``grid``.

    ``eigvecs[:, i]`` is ``g_i`` at the flattened grid points, orthonormal in
    the quadrature-weighted discrete L2 inner product.
    """

    ell: float
    sigma: float
    eigvals: np.ndarray
    eigvecs: np.ndarray
    n_modes: int
    spectrum_fraction: float
    grid: Grid
    periodic: bool = True

    @property
    def retained_eigvals(self) -> np.ndarray:
        return self.eigvals[: self.n_modes]

    @property
    def retained_eigvecs(self) -> np.ndarray:
        return self.eigvecs[:, : self.n_modes]

    def with_sigma(self, sigma: float) -> "KLField":
        return KLField(
            self.ell, sigma, self.eigvals, self.eigvecs, self.n_modes,
            self.spectrum_fraction, self.grid, self.periodic,
        )

    def modes_on(self, grid: Grid) -> np.ndarray:
        """Retained eigenfunctions sampled on ``grid``; shape ``(n_points, n_modes)``.

        Nested coarser grids are served by injection, anything else by the
        Nystrom extension of the discrete eigenproblem.
        """
        g = self.retained_eigvecs
        if grid == self.grid:
            return g
        try:
            r = grid.nesting_factor(self.grid)
        except ConfigError:
            r = None
        if r is not None:
            full = g.reshape(self.grid.x_shape + (self.n_modes,))
            sl = (slice(None, None, r),) * grid.dim
            return full[sl].reshape(-1, self.n_modes)
        C = _kernel(_points(grid), _points(self.grid), self.ell, grid.x_extent if self.periodic else None)
        w = self.grid.cell_volume
        return (C * w) @ g / self.retained_eigvals[None, :]

    def save(self, stem) -> None:
        stem = Path(stem)
        io.write_array(stem.with_suffix(".eigvecs.bin"), self.eigvecs)
        io.write_array(stem.with_suffix(".eigvals.bin"), self.eigvals)
        io.write_json(
            stem.with_suffix(".json"),
            {
                "ell": self.ell,
                "sigma": self.sigma,
                "n_modes": self.n_modes,
                "spectrum_fraction": self.spectrum_fraction,
                "grid": self.grid.to_dict(),
                "periodic": self.periodic,
            },
        )

    @classmethod
    def load(cls, stem) -> "KLField":
        stem = Path(stem)
        man = io.read_json(stem.with_suffix(".json"))
        return cls(
            ell=man["ell"],
            sigma=man["sigma"],
            eigvals=io.read_array(stem.with_suffix(".eigvals.bin")),
            eigvecs=io.read_array(stem.with_suffix(".eigvecs.bin")),
            n_modes=man["n_modes"],
            spectrum_fraction=man["spectrum_fraction"],
            grid=Grid.from_dict(man["grid"]),
            periodic=man["periodic"],
        )


def kl_decompose(
    cov: np.ndarray, grid: Grid, fraction: float = 0.95, ell: float = float("nan"),
    sigma: float = 0.1, periodic: bool = True,
) -> KLField:
    """Weighted discrete eigenproblem ``sum_b C_ab w_b g(x_b) = lambda g(x_a)``.

    Keeps the fewest modes whose eigenvalues carry at least ``fraction`` of
    the trace.
    """
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f"spectrum fraction must lie in (0, 1), got {fraction}")
    if cov.shape[0] != cov.shape[1] or not np.allclose(cov, cov.T, rtol=0, atol=1e-14):
        raise ConfigError("covariance must be a symmetric square matrix")
    s = np.sqrt(grid.x_weights.ravel())
    B = s[:, None] * cov * s[None, :]
    try:
        lam, phi = np.linalg.eigh(B)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed: {exc}") from exc
    order = np.argsort(lam)[::-1]
    lam, phi = lam[order], phi[:, order]
    floor = -EIG_NEG_TOL * max(lam[0], 1.0)
    if lam[-1] < floor:
        raise NumericalError(f"covariance is not positive semidefinite (eigenvalue {lam[-1]:.3e})")
    lam = np.maximum(lam, 0.0)
    g = phi / s[:, None]
    total = lam.sum()
    cum = np.cumsum(lam) / total
    n_modes = int(np.searchsorted(cum, fraction) + 1)
    n_modes = min(n_modes, lam.size)
    return KLField(
        ell=ell,
        sigma=sigma,
        eigvals=lam,
        eigvecs=g,
        n_modes=n_modes,
        spectrum_fraction=float(cum[n_modes - 1]),
        grid=grid,
        periodic=periodic,
    )


def make_kl_field(grid: Grid, ell: float, sigma: float, fraction: float = 0.95, periodic: bool = True) -> KLField:
    cov = assemble_covariance(grid, ell, periodic)
    return kl_decompose(cov, grid, fraction, ell=ell, sigma=sigma, periodic=periodic)


def _raw_field(kl: KLField, z_block, grid: Grid | None = None) -> np.ndarray:
    z_block = np.asarray(z_block, dtype=float)
    if z_block.shape != (kl.n_modes,):
        raise LayoutMismatch(f"expected {kl.n_modes} KL coordinates, got shape {z_block.shape}")
    grid = kl.grid if grid is None else grid
    modes = kl.modes_on(grid)
    pert = modes @ (np.sqrt(kl.retained_eigvals) * z_block)
    return (1.0 + kl.sigma * pert).reshape(grid.x_shape)


def sample_field(kl: KLField, z_block, grid: Grid | None = None) -> np.ndarray:
    """Multiplicative perturbation ``1 + sigma * sum_i sqrt(lambda_i) g_i z_i``."""
    out = _raw_field(kl, z_block, grid)
    bad = out <= 0.0
    if bad.any():
        warnings.warn(f"KL factor non-positive at {int(bad.sum())} points; clamped to {DENSITY_FLOOR}")
        out = np.where(bad, DENSITY_FLOOR, out)
    return out


def truncated_variance(kl: KLField) -> np.ndarray:
    """Pointwise variance ``sigma^2 sum_i lambda_i g_i(x)^2`` of the truncated sum."""
    g = kl.retained_eigvecs
    return kl.sigma**2 * (g**2 @ kl.retained_eigvals)


# ----------------------------------------------------------- initial data

PROFILES = ("volcano", "near_equilibrium", "equilibrium")


@dataclass
class InitialDataSpec:
    """Macroscopic initial data with KL-perturbed species densities.

    ``amplitude`` is the perturbation size of the ``near_equilibrium``
    profile; ``None`` means ``params.delta``.
    """

    profile: str = "volcano"
    kl: KLField | None = None
    amplitude: float | None = None

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ConfigError(f"unknown initial profile {self.profile!r}; choose from {PROFILES}")

    def z_dim(self, params: ModelParams) -> int:
        if self.kl is None or self.profile == "equilibrium":
            return 0
        return self.kl.n_modes * params.n_species


@dataclass
class ParameterSample:
    z: np.ndarray
    distribution: str = "normal"
    index: int = 0
    stream: str = "train"


@dataclass
class InitialReport:
    clamped_points: int = 0


def _unit_coords(grid: Grid):
    return [m / grid.x_extent for m in grid.x_mesh]


def _swirl(grid: Grid) -> np.ndarray:
    """Velocity profile: stream-function swirl in 2D, ``sin(2 pi x)`` in 1D."""
    c = _unit_coords(grid)
    if grid.dim == 1:
        return np.sin(2 * np.pi * c[0])[None]
    x, y = c
    return np.stack(
        [np.sin(np.pi * x) ** 2 * np.sin(2 * np.pi * y), -np.sin(np.pi * y) ** 2 * np.sin(2 * np.pi * x)]
    )


def initial_fields(spec: InitialDataSpec, z, params: ModelParams, grid: Grid, report: InitialReport | None = None):
    """Densities ``n_i``, particle bulk velocities ``u_p,i`` and fluid velocity ``u``."""
    z = np.asarray(z, dtype=float).ravel()
    N = params.n_species
    vol = grid.volume
    if spec.profile == "equilibrium":
        n = np.stack([np.full(grid.x_shape, 1.0 / vol) for _ in range(N)])
        zero = np.zeros((grid.dim,) + grid.x_shape)
        return n, np.stack([zero] * N), zero.copy()

    factors = []
    for idx in range(N):
        if spec.kl is None:
            factors.append(np.ones(grid.x_shape))
            continue
        m = spec.kl.n_modes
        block = z[idx * m : (idx + 1) * m] if z.size else np.zeros(m)
        raw = _raw_field(spec.kl, block, grid)
        bad = raw <= 0.0
        if bad.any():
            warnings.warn(f"species {idx + 1}: perturbation factor non-positive at {int(bad.sum())} points")
            if report is not None:
                report.clamped_points += int(bad.sum())
            raw = np.where(bad, DENSITY_FLOOR, raw)
        factors.append(raw)

    c = _unit_coords(grid)
    r2 = sum((ci - 0.5) ** 2 for ci in c)
    if spec.profile == "volcano":
        n = np.stack([(0.3 + 0.1 * i + 100.0 * r2) * np.exp(-40.0 * r2) * factors[i - 1] for i in params.species])
        up = _swirl(grid)
        u_p = np.stack([up] * N)
        u = spectral.leray_project(up, grid)
        return n, u_p, u

    # near_equilibrium
    amp = params.delta if spec.amplitude is None else spec.amplitude
    n_list = []
    for i in params.species:
        shape = np.cos(2 * np.pi * c[0] + (i - 1) * np.pi / 3)
        for ca in c[1:]:
            shape = shape * np.cos(2 * np.pi * ca)
        xi = shape * factors[i - 1]
        xi = xi - xi.mean()
        n_list.append((1.0 + amp * xi) / vol)
    n = np.stack(n_list)
    up = amp * _swirl(grid)
    u_p = np.stack([up] * N)
    u = spectral.leray_project(up, grid)
    return n, u_p, u


def zero_total_momentum(state: KineticState, params: ModelParams, grid: Grid) -> KineticState:
    """Shift the fluid velocity by a constant so ``u + kappa sum J_i`` integrates to 0."""
    J = species_momentum(state.F, params, grid)
    axes = tuple(range(-grid.dim, 0))
    total = state.u.mean(axis=axes) + params.kappa * J.sum(axis=0).mean(axis=axes)
    state.u = state.u - total.reshape((-1,) + (1,) * grid.dim)
    return state


def build_initial_state(
    spec: InitialDataSpec, z, params: ModelParams, grid: Grid, report: InitialReport | None = None
) -> KineticState:
    """Local Maxwellians ``F_i = n_i M_i(v - u_p,i)`` with a solenoidal fluid velocity."""
    if isinstance(z, ParameterSample):
        z = z.z
    n, u_p, u = initial_fields(spec, z, params, grid, report)
    F = np.stack([local_maxwellian(i, n[i - 1], u_p[i - 1], params, grid) for i in params.species])
    state = KineticState(F, u, np.zeros(grid.x_shape), 0.0)
    if spec.profile == "near_equilibrium":
        state = zero_total_momentum(state, params, grid)
    return state


# ---------------------------------------------------------------- sampling


def _stream_id(stream) -> int:
    if isinstance(stream, str):
        try:
            return STREAMS[stream]
        except KeyError:
            raise ConfigError(f"unknown sample stream {stream!r}") from None
    return int(stream)


def draw_sample(index: int, dim: int, distribution: str, seed: int, stream="train") -> ParameterSample:
    """Sample ``index`` of a stream; independent of how many others are drawn."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(_stream_id(stream), index))
    rng = np.random.Generator(np.random.PCG64(ss))
    if distribution == "normal":
        z = rng.standard_normal(dim)
    elif distribution == "uniform":
        z = rng.uniform(-1.0, 1.0, dim)
    else:
        raise ConfigError(f"unknown distribution {distribution!r}")
    return ParameterSample(z=z, distribution=distribution, index=index, stream=str(stream))


def draw_samples(count: int, dim: int, distribution: str = "normal", seed: int = 0, stream="train"):
    return [draw_sample(j, dim, distribution, seed, stream) for j in range(count)]
