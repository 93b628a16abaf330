import numpy as np
import pytest

from bifivfp import spectral
from bifivfp.errors import CFLViolation, ConfigError, LayoutMismatch
from bifivfp.grid import Grid, ModelParams
from bifivfp.kinetic import species_mass, total_momentum
from bifivfp.lofi import (
    AcousticState,
    FluidState,
    LoFiKind,
    acoustic_rate_factor,
    hydro_momentum,
    prolong,
    prolong_field,
    step_acoustic,
    step_hydro,
)
from bifivfp.random_inputs import draw_samples
from bifivfp.simulate import (
    component_names,
    make_problem,
    run_high_fidelity,
    run_kinetic,
    run_low_fidelity,
)
from bifivfp.snapshot import Snapshot


def _fluid(grid, params, rng, amp=0.3):
    n = np.stack([1.0 + amp * rng.random(grid.x_shape) for _ in params.species])
    u = spectral.leray_project(rng.normal(size=(grid.dim,) + grid.x_shape), grid)
    return FluidState(n, u, np.zeros(grid.x_shape))


def test_lofi_kind_validation():
    with pytest.raises(ConfigError):
        LoFiKind("cheap", 2)
    with pytest.raises(ConfigError):
        LoFiKind("coarse", 3)
    assert LoFiKind("coarse", 4).grid_for(Grid(n_x=64)).n_x == 16


@pytest.mark.parametrize("dim", [1, 2])
def test_hydro_rest_state_is_stationary(dim):
    g = Grid(dim=dim, n_x=16)
    p = ModelParams(dim=dim)
    s = FluidState(np.full((2,) + g.x_shape, 0.7), np.zeros((dim,) + g.x_shape), np.zeros(g.x_shape))
    out = step_hydro(s, p, g, 0.01)
    assert np.max(np.abs(out.n - s.n)) < 1e-12 and np.max(np.abs(out.u)) < 1e-12


@pytest.mark.parametrize("dim", [1, 2])
def test_hydro_conserves_mass_and_momentum(dim, rng):
    g = Grid(dim=dim, n_x=16)
    p = ModelParams(dim=dim)
    s = _fluid(g, p, rng)
    mass0 = s.n.sum(axis=tuple(range(1, dim + 1)))
    mom0 = hydro_momentum(s, p, g)
    dt = 0.4 * g.dx / (dim * np.abs(s.u).max())
    for _ in range(5):
        s = step_hydro(s, p, g, dt)
        assert np.allclose(s.n.sum(axis=tuple(range(1, dim + 1))), mass0, rtol=1e-12)
        assert np.max(np.abs(hydro_momentum(s, p, g) - mom0)) < 1e-10
        assert spectral.relative_divergence(s.u, g) < 1e-10
        assert s.n.min() >= 0.0


def test_hydro_cfl_violation(rng):
    g = Grid(n_x=16)
    p = ModelParams()
    s = _fluid(g, p, rng)
    with pytest.raises(CFLViolation):
        step_hydro(s, p, g, 2 * g.dx / np.abs(s.u).max())


def test_acoustic_frozen_without_velocity(rng):
    g = Grid(dim=2, n_x=8)
    p = ModelParams(dim=2)
    nt = rng.normal(size=(2, 8, 8))
    out = step_acoustic(AcousticState(nt, np.zeros((2, 8, 8)), np.zeros((8, 8))), p, g, 0.3)
    assert np.array_equal(out.n_tilde, nt) and np.all(out.u_tilde == 0)


def test_acoustic_shear_mode_decay_rate():
    # 1D periodic solenoidal fields are constant, so a 2D shear mode is used
    g = Grid(dim=2, n_x=16)
    p = ModelParams(dim=2)
    x, y = g.x_mesh
    u = np.stack([np.sin(2 * np.pi * y), np.zeros_like(y)])
    s = AcousticState(np.zeros((2, 16, 16)), u, np.zeros((16, 16)))
    t = 0.0
    for _ in range(7):
        s = step_acoustic(s, p, g, 0.05)
        t += 0.05
    rate = 4 * np.pi**2 / (1 + p.kappa * sum(p.species))
    exact = np.exp(-rate * t) * u
    assert np.max(np.abs(s.u_tilde - exact)) / np.max(np.abs(exact)) < 1e-6
    assert acoustic_rate_factor(p, g) == pytest.approx(1 / (1 + 3 * p.kappa))


def test_coarse_factor_one_matches_high_fidelity(volcano):
    z = draw_samples(1, volcano.z_dim, seed=5)[0].z
    hi = run_high_fidelity(z, volcano)
    lo = run_low_fidelity(z, volcano, LoFiKind("coarse", 1))
    assert np.max(np.abs(hi.values - lo.values)) <= 1e-14
    assert lo.meta["model"] == "coarse1"


def test_hydro_equilibrium_steady_snapshot():
    p = make_problem(grid=Grid(n_x=16), profile="equilibrium")
    s = run_low_fidelity(np.zeros(0), p, LoFiKind("hydro", 1))
    assert np.allclose(s.field("rho"), 3.0, atol=1e-12)
    assert np.max(np.abs(s.field("mom_x"))) < 1e-12


def test_coarse_kinetic_conserves(volcano):
    from bifivfp.kinetic import default_dt

    g = LoFiKind("coarse", 4).grid_for(volcano.grid)
    z = draw_samples(1, volcano.z_dim, seed=1)[0].z
    states = []
    run_kinetic(z, volcano, g, n_checkpoints=4, callback=lambda s: states.append(s.copy()))
    m0, P0 = species_mass(states[0], g), total_momentum(states[0], volcano.params, g)
    for s in states[1:]:
        assert np.allclose(species_mass(s, g), m0, rtol=1e-12)
        assert np.max(np.abs(total_momentum(s, volcano.params, g) - P0)) < 1e-12


@pytest.mark.slow
def test_coarse_model_tracks_high_fidelity_across_samples():
    problem = make_problem(ModelParams(epsilon=1.0))
    samples = draw_samples(50, problem.z_dim, seed=11)
    hi = [run_high_fidelity(s, problem) for s in samples]
    lo = [prolong(run_low_fidelity(s, problem, LoFiKind("coarse", 4)), problem.grid) for s in samples]
    assert np.max(np.abs(hi[0].values - lo[0].values)) > 1e-3
    for c in component_names(1):
        H = np.stack([h.field(c) for h in hi])
        L = np.stack([l.field(c) for l in lo])
        # correlation over samples of the fluctuations, pooled over the grid
        dH, dL = H - H.mean(axis=0), L - L.mean(axis=0)
        corr = (dH * dL).sum() / np.sqrt((dH**2).sum() * (dL**2).sum())
        assert corr > 0.9, c


def _snap(f, g):
    return Snapshot.from_fields({"a": f}, g.cell_volume, [0.0], "lo")


def test_prolong_constant_and_linear():
    c, f = Grid(n_x=8), Grid(n_x=32)
    out = prolong(_snap(np.full(8, 2.5), c), f)
    assert np.all(out.field("a") == 2.5)
    # a periodic hat is piecewise linear with kinks at coarse nodes
    hat = np.minimum(c.x, 1.0 - c.x)
    assert np.max(np.abs(prolong(_snap(hat, c), f).field("a") - np.minimum(f.x, 1.0 - f.x))) < 1e-14


def test_prolong_linear_in_x_within_cell():
    vals = prolong_field(np.array([0.0, 1.0, 2.0, 3.0]), 4, 1)
    assert np.allclose(vals[:13], np.arange(13) / 4, atol=1e-14)


def test_prolong_bilinear_2d():
    c, f = Grid(dim=2, n_x=4), Grid(dim=2, n_x=8)
    x, y = c.x_mesh
    out = prolong_field(1.0 + 0.0 * x, 2, 2)
    assert out.shape == (8, 8) and np.all(out == 1.0)
    g = prolong_field(np.outer(np.arange(4.0), np.ones(4)), 2, 2)
    assert np.allclose(g[:7, 0], np.arange(7) / 2)


def test_prolong_sine_error_bound():
    c, f = Grid(n_x=32), Grid(n_x=128)
    out = prolong(_snap(np.sin(2 * np.pi * c.x), c), f).field("a")
    assert np.max(np.abs(out - np.sin(2 * np.pi * f.x))) < (2 * np.pi * c.dx) ** 2


def test_prolong_rejects_non_nested():
    with pytest.raises(LayoutMismatch):
        prolong(_snap(np.ones(6), Grid(n_x=6)), Grid(n_x=16))
