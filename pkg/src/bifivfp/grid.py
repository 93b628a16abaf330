"""Model parameters and structured phase-space grids.

Space is a periodic box ``[0, Lx) x [0, Ly)`` sampled at ``x_k = k * dx``;
velocity is the symmetric box ``[-L_v, L_v]`` sampled at cell centres.  Both
use equal-weight (midpoint / periodic trapezoid) quadrature.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from functools import cached_property

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of the kinetic-fluid mixture.

    ``delta`` is only used by the perturbative diagnostics and by the
    linearised (acoustic) model.
    """

    epsilon: float = 1.0
    kappa: float = 1.0
    theta_bar: float = 1.0
    n_species: int = 2
    delta: float = 1e-2
    dim: int = 1

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if not self.kappa > 0:
            raise ConfigError(f"kappa must be positive, got {self.kappa}")
        if not self.theta_bar > 0:
            raise ConfigError(f"theta_bar must be positive, got {self.theta_bar}")
        if self.n_species < 1:
            raise ConfigError(f"n_species must be >= 1, got {self.n_species}")
        if not self.delta > 0:
            raise ConfigError(f"delta must be positive, got {self.delta}")
        if self.dim not in (1, 2):
            raise ConfigError(f"dim must be 1 or 2, got {self.dim}")

    @property
    def species(self) -> range:
        """Species labels ``1..N``; the label doubles as the particle size."""
        return range(1, self.n_species + 1)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        return cls(**d)


@dataclass(frozen=True)
class Grid:
    dim: int = 1
    n_x: int = 64
    n_v: int = 32
    x_extent: float = 1.0
    v_extent: float = 8.0

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigError(f"dim must be 1 or 2, got {self.dim}")
        if self.n_x < 2 or self.n_v < 2:
            raise ConfigError("grids need at least two points per direction")
        if not (self.x_extent > 0 and self.v_extent > 0):
            raise ConfigError("domain extents must be positive")

    @property
    def dx(self) -> float:
        return self.x_extent / self.n_x

    @property
    def dv(self) -> float:
        return 2.0 * self.v_extent / self.n_v

    @property
    def x_shape(self) -> tuple[int, ...]:
        return (self.n_x,) * self.dim

    @property
    def v_shape(self) -> tuple[int, ...]:
        return (self.n_v,) * self.dim

    @property
    def volume(self) -> float:
        """Spatial domain volume ``|X|``."""
        return self.x_extent**self.dim

    @property
    def cell_volume(self) -> float:
        return self.dx**self.dim

    @property
    def dv_volume(self) -> float:
        return self.dv**self.dim

    @cached_property
    def x(self) -> np.ndarray:
        return np.arange(self.n_x) * self.dx

    @cached_property
    def v(self) -> np.ndarray:
        return -self.v_extent + (np.arange(self.n_v) + 0.5) * self.dv

    @cached_property
    def x_mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.x] * self.dim), indexing="ij"))

    @cached_property
    def v_mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.v] * self.dim), indexing="ij"))

    @cached_property
    def v_sq(self) -> np.ndarray:
        return sum(vm**2 for vm in self.v_mesh)

    @cached_property
    def x_weights(self) -> np.ndarray:
        return np.full(self.x_shape, self.cell_volume)

    @cached_property
    def v_weights(self) -> np.ndarray:
        return np.full(self.v_shape, self.dv_volume)

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Angular wavenumbers on the periodic grid, broadcastable to x_shape."""
        k1 = 2.0 * np.pi * np.fft.fftfreq(self.n_x, d=self.dx)
        return tuple(np.meshgrid(*([k1] * self.dim), indexing="ij"))

    @cached_property
    def deriv_wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Wavenumbers for first derivatives: the Nyquist mode is set to zero so
        that odd derivatives of real fields stay real."""
        k1 = 2.0 * np.pi * np.fft.fftfreq(self.n_x, d=self.dx)
        if self.n_x % 2 == 0:
            k1[self.n_x // 2] = 0.0
        return tuple(np.meshgrid(*([k1] * self.dim), indexing="ij"))

    def coarsen(self, factor: int) -> "Grid":
        if factor < 1 or self.n_x % factor:
            raise ConfigError(f"coarsening factor {factor} does not divide n_x={self.n_x}")
        return replace(self, n_x=self.n_x // factor)

    def refine(self, factor: int) -> "Grid":
        return replace(self, n_x=self.n_x * factor)

    def nesting_factor(self, fine: "Grid") -> int:
        """Integer ratio ``fine.n_x / self.n_x`` for nested periodic grids."""
        if (fine.dim, fine.x_extent) != (self.dim, self.x_extent) or fine.n_x % self.n_x:
            raise ConfigError(f"grid with n_x={self.n_x} is not nested in n_x={fine.n_x}")
        return fine.n_x // self.n_x

    def restrict(self, field: np.ndarray, fine: "Grid") -> np.ndarray:
        """Inject a field sampled on a nested finer grid onto this grid."""
        r = self.nesting_factor(fine)
        sl = (slice(None, None, r),) * self.dim
        lead = field.ndim - self.dim
        return field[(slice(None),) * lead + sl]

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "n_x": self.n_x,
            "n_v": self.n_v,
            "x_extent": self.x_extent,
            "v_extent": self.v_extent,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Grid":
        return cls(**d)
