"""Error metrics, perturbation energy, decay-rate fits, conservation checks and
the bi-fidelity convergence study."""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .bifidelity import BiFiModel, GroupedBiFi, greedy_select
from .errors import LayoutMismatch
from .grid import Grid, ModelParams
from .kinetic import KineticState, maxwellian, momentum_scale, species_mass, total_momentum
from .lofi import prolong
from .simulate import component_names
from .snapshot import Snapshot, SnapshotSet

FLOAT_FMT = "{:.17g}"
CONVERGENCE_COLUMNS = ["K", "component", "err_bi", "err_lo", "err_ratio", "runtime_hi_s", "runtime_lo_s"]
ENERGY_COLUMNS = ["t", "E0", "E1", "E2"]
UNDERFLOW = 1e-280


def fmt(x) -> str:
    return FLOAT_FMT.format(float(x)) if isinstance(x, (float, np.floating)) else str(x)


# ------------------------------------------------------------------ errors


@dataclass
class ErrorReport:
    errors: dict  # component -> mean L2 error
    per_sample: dict  # component -> array of per-sample errors
    K: int | None = None
    M_eval: int = 0
    runtime: dict = field(default_factory=dict)


def _grid_of(s: Snapshot) -> Grid:
    if "grid" in s.meta:
        return Grid.from_dict(s.meta["grid"])
    return Grid(dim=len(s.grid_shape), n_x=s.grid_shape[0])


def mean_l2_error(reference: Sequence[Snapshot], approx: Sequence[Snapshot], K: int | None = None) -> ErrorReport:
    """Per-component mean over samples of the weighted L2 norm of the difference.

    Approximations on a coarser nested grid are prolonged to the reference grid.
    """
    if len(reference) != len(approx):
        raise LayoutMismatch(f"{len(reference)} reference vs {len(approx)} approximate snapshots")
    comps = reference[0].components
    per = {c: np.empty(len(reference)) for c in comps}
    for j, (r, a) in enumerate(zip(reference, approx)):
        if r.z.shape != a.z.shape or not np.array_equal(r.z, a.z):
            raise LayoutMismatch(f"sample {j}: parameter vectors differ")
        if a.grid_shape != r.grid_shape:
            a = prolong(a, _grid_of(r))
        for c in comps:
            diff = r.field(c) - a.field(c)
            w = r.weights[: r.field_size].reshape(r.grid_shape)
            per[c][j] = np.sqrt(float((w * diff**2).sum()))
    return ErrorReport({c: float(v.mean()) for c, v in per.items()}, per, K, len(reference))


# ------------------------------------------------------------------ energy


@dataclass
class EnergyReport:
    t: np.ndarray
    E: np.ndarray  # (n_checkpoints, 3) for s = 0, 1, 2
    decay_rate: float = float("nan")
    r_squared: float = float("nan")
    monotone: bool = True
    meta: dict = field(default_factory=dict)

    def write_csv(self, path) -> None:
        rows = [[t] + list(e) for t, e in zip(self.t, self.E)]
        write_csv(path, ENERGY_COLUMNS, rows)


def _fd(f: np.ndarray, order: int, axis: int, h: float) -> np.ndarray:
    if order == 0:
        return f
    if order == 1:
        return (np.roll(f, -1, axis) - np.roll(f, 1, axis)) / (2.0 * h)
    if order == 2:
        return (np.roll(f, -1, axis) - 2.0 * f + np.roll(f, 1, axis)) / h**2
    raise ValueError(f"unsupported derivative order {order}")


def _multi_indices(dim: int, s: int):
    return [a for a in itertools.product(range(s + 1), repeat=dim) if sum(a) <= s]


def _sobolev_sq(f: np.ndarray, s: int, grid: Grid, first_axis: int, measure: float) -> float:
    """``sum_{|alpha| <= s} sum |D^alpha f|^2 * measure`` with centred differences
    along the spatial axes ``first_axis .. first_axis + dim - 1``."""
    total = 0.0
    for alpha in _multi_indices(grid.dim, s):
        g = f
        for a, order in enumerate(alpha):
            g = _fd(g, order, first_axis + a, grid.dx)
        total += float((g**2).sum()) * measure
    return total


def energy_terms(state: KineticState, params: ModelParams, grid: Grid, s: int, delta: float | None = None) -> dict:
    """Fluid, particle and mean-velocity contributions to the perturbation energy.

    The particle perturbation is ``f_i = (F_i - mu_i) / (delta sqrt(mu_i))``;
    its weighted square ``(F_i - mu_i)^2 / (delta^2 mu_i)`` is formed without
    taking square roots, and velocity cells where ``mu_i`` underflows use the
    unweighted variable ``(F_i - mu_i) / delta`` instead.
    """
    if s not in (0, 1, 2):
        raise ValueError(f"Sobolev order must be 0, 1 or 2, got {s}")
    delta = params.delta if delta is None else delta
    d = grid.dim
    fluid = _sobolev_sq(state.u, s, grid, 1, grid.cell_volume) / delta**2
    u_bar = state.u.reshape(d, -1).mean(axis=1)
    mean_term = float((u_bar**2).sum()) / delta**2
    part = 0.0
    underflow = 0
    for idx, i in enumerate(params.species):
        mu = maxwellian(i, params, grid)
        ok = mu > UNDERFLOW
        underflow += int((~ok).sum())
        weight = np.where(ok, 1.0 / np.where(ok, mu, 1.0), 1.0)
        g = (state.F[idx] - mu) / delta
        # |D^alpha f|^2 = |D^alpha g|^2 / mu because mu does not depend on x
        gw = g * np.sqrt(weight)
        part += _sobolev_sq(gw, s, grid, 0, grid.cell_volume * grid.dv_volume)
    part *= params.kappa * params.theta_bar
    return {
        "fluid": fluid,
        "particles": part,
        "mean": mean_term,
        "total": fluid + part + mean_term,
        "underflow_cells": underflow,
        "f_weighting": "inverse_maxwellian" if underflow == 0 else "inverse_maxwellian_with_unweighted_tail",
    }


def energy(state: KineticState, params: ModelParams, grid: Grid, s: int = 2, delta: float | None = None) -> float:
    return energy_terms(state, params, grid, s, delta)["total"]


@dataclass
class DecayFit:
    rate: float
    r_squared: float
    reason: str = ""


def fit_decay(t, E) -> DecayFit:
    """Least-squares slope of ``log E`` over the second half of the series."""
    t = np.asarray(t, dtype=float)
    E = np.asarray(E, dtype=float)
    if t.size < 5:
        return DecayFit(float("nan"), float("nan"), "fewer than 5 checkpoints")
    if np.any(E <= 0):
        return DecayFit(float("nan"), float("nan"), "non-positive energy values")
    h = t.size // 2
    tt, y = t[h:], np.log(E[h:])
    A = np.stack([np.ones_like(tt), tt], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float((resid**2).sum()) / ss_tot
    rate = -float(coef[1])
    if abs(rate) < 1e-14:
        rate = 0.0
    return DecayFit(rate, r2)


def is_non_increasing(E, slack: float = 1e-10) -> bool:
    E = np.asarray(E, dtype=float)
    return bool(np.all(np.diff(E) <= slack * max(1.0, float(np.max(np.abs(E))))))


def energy_report(states: Sequence[KineticState], params: ModelParams, grid: Grid, slack: float = 1e-10) -> EnergyReport:
    t = np.array([s.t for s in states])
    terms = [[energy_terms(st, params, grid, s) for s in (0, 1, 2)] for st in states]
    E = np.array([[x["total"] for x in row] for row in terms])
    fit = fit_decay(t, E[:, 2])
    meta = {
        "f_weighting": terms[0][2]["f_weighting"] if terms else "",
        "fit_reason": fit.reason,
        "delta": params.delta,
    }
    return EnergyReport(t, E, fit.rate, fit.r_squared, is_non_increasing(E[:, 2], slack), meta)


# ------------------------------------------------------------ conservation


@dataclass
class ConservationReport:
    mass_drift: float
    momentum_drift: float
    per_species_mass_drift: np.ndarray

    def ok(self, tol: float) -> bool:
        return self.mass_drift <= tol and self.momentum_drift <= tol


def conservation_report(checkpoints: Sequence[KineticState], params: ModelParams, grid: Grid) -> ConservationReport:
    """Max relative drift of per-species mass and of ``int(u + kappa sum J_i)``.

    Momentum drift is measured against the larger of the initial net momentum
    and the total momentum magnitude, since the net value may vanish.
    """
    first = checkpoints[0]
    m0 = species_mass(first, grid)
    p0 = total_momentum(first, params, grid)
    scale = max(float(np.max(np.abs(p0))), momentum_scale(first, params, grid), np.finfo(float).tiny)
    mass = np.zeros_like(m0)
    mom = 0.0
    for st in checkpoints[1:]:
        mass = np.maximum(mass, np.abs(species_mass(st, grid) - m0) / m0)
        mom = max(mom, float(np.max(np.abs(total_momentum(st, params, grid) - p0))) / scale)
    return ConservationReport(float(mass.max(initial=0.0)), mom, mass)


# -------------------------------------------------------- convergence study


def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(x) for x in r])


def default_groups(components: Sequence[str], mode: str = "per_component") -> dict:
    if mode == "per_component":
        return {c: (c,) for c in components}
    if mode == "concatenated":
        return {"all": tuple(components)}
    raise ValueError(f"unknown projection mode {mode!r}")


def primary(snaps: Sequence[Snapshot]) -> list[Snapshot]:
    """Restrict snapshots to the moment components (dropping diagnostic fields)."""
    return [s.select(component_names(len(s.grid_shape))) for s in snaps]


def bifi_predict(model: BiFiModel, queries: Sequence[Snapshot], mode: str = "per_component") -> list[Snapshot]:
    comps = model.lo_basis[0].components
    grouped = GroupedBiFi(model, default_groups(comps, mode))
    return [grouped.approximate(q.select(comps)) for q in queries]


def _mean_runtime(snaps: Sequence[Snapshot]) -> float:
    vals = [s.meta.get("runtime_s") for s in snaps if "runtime_s" in s.meta]
    return float(np.mean(vals)) if vals else float("nan")


def convergence_study(
    lo_candidates: SnapshotSet,
    hi_runner: Callable[[Snapshot], Snapshot],
    lo_eval: Sequence[Snapshot],
    hi_eval: Sequence[Snapshot],
    K_list: Sequence[int],
    mode: str = "per_component",
) -> list[dict]:
    """Bi-fidelity and low-fidelity errors against held-out truth for each ``K``.

    Greedy selections are nested, so the high-fidelity runs for the largest
    ``K`` serve every smaller one.  ``hi_runner`` maps a selected
    low-fidelity candidate to its high-fidelity snapshot.
    """
    K_max = max(K_list)
    candidates = SnapshotSet(primary(lo_candidates))
    selection = greedy_select(candidates, K_max)
    lo_basis = [candidates[int(i)] for i in selection.pivots]
    hi_basis = primary([hi_runner(lo_candidates[int(i)]) for i in selection.pivots])
    hi_eval = primary(hi_eval)
    lo_eval = primary(lo_eval)
    lo_err = mean_l2_error(hi_eval, lo_eval)
    rt_hi = _mean_runtime(hi_eval)
    rt_lo = _mean_runtime(lo_eval)
    rows = []
    for K in K_list:
        model = BiFiModel(selection, lo_basis[:K], hi_basis[:K])
        approx = bifi_predict(model, lo_eval, mode)
        rep = mean_l2_error(hi_eval, approx, K)
        for c in hi_eval[0].components:
            eb, el = rep.errors[c], lo_err.errors[c]
            rows.append(
                {
                    "K": K,
                    "component": c,
                    "err_bi": eb,
                    "err_lo": el,
                    "err_ratio": eb / el if el > 0 else float("nan"),
                    "runtime_hi_s": rt_hi,
                    "runtime_lo_s": rt_lo,
                }
            )
    return rows


def write_convergence_csv(path, rows: Sequence[dict]) -> None:
    write_csv(path, CONVERGENCE_COLUMNS, [[r[c] for c in CONVERGENCE_COLUMNS] for r in rows])
