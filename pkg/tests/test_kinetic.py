import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bifivfp import spectral
from bifivfp.errors import CFLViolation
from bifivfp.grid import Grid, ModelParams
from bifivfp.kinetic import (
    KineticState,
    default_dt,
    equilibrium_state,
    fokker_planck_implicit,
    integrate,
    local_maxwellian,
    max_stable_dt,
    maxwellian,
    moments,
    species_density,
    species_mass,
    species_momentum,
    step_kinetic,
    total_momentum,
)
from bifivfp.random_inputs import build_initial_state, draw_samples


@pytest.mark.parametrize("eps", [1.0, 1e-2, 1e-5, 1e-6])
@pytest.mark.parametrize("dim", [1, 2])
def test_equilibrium_is_fixed_point(eps, dim):
    params = ModelParams(epsilon=eps, dim=dim)
    grid = Grid(dim=dim, n_x=16 if dim == 1 else 8, n_v=16 if dim == 1 else 10)
    s0 = equilibrium_state(params, grid)
    s1 = step_kinetic(s0, params, grid, default_dt(s0, grid))
    assert np.max(np.abs(s1.F - s0.F)) / np.max(s0.F) < 1e-12
    assert np.max(np.abs(s1.u)) < 1e-12


def test_maxwellian_normalisation_and_temperature():
    grid1 = Grid(n_x=8, n_v=32)
    params = ModelParams()
    for i in params.species:
        mu = maxwellian(i, params, grid1)
        mass = mu.sum() * grid1.dv_volume * grid1.volume
        assert mass == pytest.approx(1.0, abs=1e-8)
        var = (mu * grid1.v**2).sum() * grid1.dv_volume / (mu.sum() * grid1.dv_volume)
        assert var == pytest.approx(params.theta_bar / i, rel=1e-8)


def test_shifted_maxwellian_moments(grid1):
    params = ModelParams()
    n = 1.0 + 0.3 * np.cos(2 * np.pi * grid1.x)
    F1 = local_maxwellian(1, n, np.full((1, grid1.n_x), 0.3), params, grid1)
    assert np.allclose(species_density(F1[None], grid1)[0], n, atol=1e-8)
    J = species_momentum(F1[None], ModelParams(n_species=1), grid1)[0, 0]
    assert np.allclose(J / (1 * n), 0.3, atol=1e-8)


def _near_eq(eps, grid, seed=0):
    from bifivfp.simulate import make_problem

    p = make_problem(ModelParams(epsilon=eps), grid, profile="near_equilibrium")
    z = draw_samples(1, p.z_dim, seed=seed)[0].z
    return p, build_initial_state(p.init, z, p.params, grid)


@pytest.mark.parametrize("eps", [1.0, 1e-3, 1e-6])
def test_mass_momentum_conserved_and_positive(eps, grid1):
    p, s = _near_eq(eps, grid1)
    m0, P0 = species_mass(s, grid1), total_momentum(s, p.params, grid1)
    dt = default_dt(s, grid1)
    for _ in range(20):
        s = step_kinetic(s, p.params, grid1, dt)
    assert np.allclose(species_mass(s, grid1), m0, rtol=1e-13)
    assert np.allclose(total_momentum(s, p.params, grid1), P0, atol=1e-14)
    assert s.F.min() >= 0.0


def test_two_dimensional_step_conserves(grid2):
    from bifivfp.simulate import make_problem

    p = make_problem(ModelParams(dim=2), grid2, profile="volcano")
    s = build_initial_state(p.init, draw_samples(1, p.z_dim, seed=2)[0].z, p.params, grid2)
    m0, P0 = species_mass(s, grid2), total_momentum(s, p.params, grid2)
    dt = default_dt(s, grid2)
    for _ in range(5):
        s = step_kinetic(s, p.params, grid2, dt)
    assert np.allclose(species_mass(s, grid2), m0, rtol=1e-13)
    assert np.allclose(total_momentum(s, p.params, grid2), P0, atol=1e-13)
    assert spectral.relative_divergence(s.u, grid2) < 1e-10
    assert s.F.min() >= 0.0


def test_cfl_violation_raises(grid1):
    params = ModelParams()
    s = equilibrium_state(params, grid1)
    with pytest.raises(CFLViolation):
        step_kinetic(s, params, grid1, 2.0 * max_stable_dt(s, grid1))


def test_fokker_planck_kernel_is_shifted_maxwellian(grid1):
    params = ModelParams(epsilon=1e-3)
    u = np.full((1, grid1.n_x), 0.4)
    F = local_maxwellian(2, np.ones(grid1.n_x), u, params, grid1)
    out = fokker_planck_implicit(F, u, 2, params, grid1, 10.0)
    assert np.max(np.abs(out - F)) < 1e-12 * F.max()


@settings(max_examples=25)
@given(st.floats(0.05, 5.0), st.floats(-1.0, 1.0), st.integers(0, 10_000))
def test_fokker_planck_preserves_mass_and_positivity(dt, u0, seed):
    grid = Grid(n_x=4, n_v=20)
    params = ModelParams(epsilon=1e-2)
    F = np.random.default_rng(seed).random((4, 20))
    out = fokker_planck_implicit(F, np.full((1, 4), u0), 1, params, grid, dt)
    assert np.allclose(out.sum(axis=1), F.sum(axis=1), rtol=1e-12)
    assert out.min() >= 0.0


def test_stiff_limit_locks_particles_to_fluid(grid1):
    # at tiny Stokes number the particle bulk velocity follows the fluid up to
    # the O(dt) lag of the splitting
    p, s = _near_eq(1e-6, grid1)
    dt = default_dt(s, grid1)
    gaps = []
    for _ in range(30):
        s = step_kinetic(s, p.params, grid1, dt)
        m = moments(s, p.params, grid1)
        gaps.append(np.max(np.abs(m.J[:, 0] / m.rho_i - s.u[0])))
    assert gaps[-1] < 0.2 * gaps[0]
    assert gaps[-1] < 0.05 * p.params.delta


def test_integrate_checkpoints(grid1):
    p, s = _near_eq(1.0, grid1)
    times = []
    out = integrate(s, p.params, grid1, 0.05, n_checkpoints=5, callback=lambda st: times.append(st.t))
    assert len(times) == 6 and times[0] == 0.0
    assert out.t == 0.05


def test_first_order_grid_convergence():
    from bifivfp.simulate import make_problem, run_high_fidelity

    snaps = {}
    for n in (16, 32, 128):
        p = make_problem(ModelParams(), Grid(n_x=n), profile="volcano")
        snaps[n] = run_high_fidelity(np.zeros(p.z_dim), p)
    fine = Grid(n_x=128)
    errs = []
    for n in (16, 32):
        c = Grid(n_x=n)
        d = np.concatenate([c.restrict(snaps[128].field(k), fine) - snaps[n].field(k) for k in ("rho", "mom_x")])
        errs.append(np.sqrt((d**2).sum() * c.cell_volume))
    # first-order scheme: halving dx and dt halves the error, up to a factor 1.5
    assert errs[0] / errs[1] > 2.0 / 1.5
