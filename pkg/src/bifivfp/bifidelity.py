"""Greedy node selection by pivoted Cholesky, Galerkin projection onto the
low-fidelity basis and reconstruction from the high-fidelity basis."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg as sla

from . import io
from .errors import LayoutMismatch, RankDeficient, SingularGramian
from .snapshot import Snapshot, SnapshotSet, check_compatible, inner_product

RANK_TOL = 1e-12
TIE_TOL = 1e-12


def _argmax_lowest_index(values: np.ndarray, labels: np.ndarray) -> int:
    """Position of the maximum; near-ties go to the smallest label."""
    vmax = values.max()
    tied = np.flatnonzero(values >= vmax - TIE_TOL * abs(vmax))
    return int(tied[np.argmin(labels[tied])])


@dataclass
class GreedySelection:
    """Output of :func:`greedy_select`.

    ``factor`` is the ``(M, K)`` lower-trapezoidal Cholesky factor with rows in
    pivot order ``perm`` (the first ``K`` entries of ``perm`` are the pivots).
    """

    pivots: np.ndarray
    perm: np.ndarray
    factor: np.ndarray
    residuals: np.ndarray
    final_residuals: np.ndarray

    @property
    def K(self) -> int:
        return len(self.pivots)

    @property
    def L(self) -> np.ndarray:
        """Truncated ``K x K`` factor."""
        return self.factor[: self.K]

    @property
    def gramian(self) -> np.ndarray:
        L = self.L
        return L @ L.T

    def full_gramian_estimate(self) -> np.ndarray:
        """``P L L^T P^T`` in original candidate order (exact when K = M)."""
        M = self.factor.shape[0]
        G = np.empty((M, M))
        approx = self.factor @ self.factor.T
        G[np.ix_(self.perm, self.perm)] = approx
        return G

    def save(self, directory) -> dict:
        d = Path(directory)
        digest = io.write_array(d / "selection_factor.bin", self.factor)
        io.write_json(
            d / "selection.json",
            {
                "pivots": self.pivots.tolist(),
                "perm": self.perm.tolist(),
                "residuals": [float(r) for r in self.residuals],
                "final_residuals": [float(r) for r in self.final_residuals],
                "factor_sha256": digest,
            },
        )
        return {"selection_factor.bin": digest}

    @classmethod
    def load(cls, directory) -> "GreedySelection":
        d = Path(directory)
        man = io.read_json(d / "selection.json")
        return cls(
            pivots=np.array(man["pivots"], dtype=int),
            perm=np.array(man["perm"], dtype=int),
            factor=io.read_array(d / "selection_factor.bin"),
            residuals=np.array(man["residuals"], dtype=float),
            final_residuals=np.array(man["final_residuals"], dtype=float),
        )


def greedy_select(candidates: SnapshotSet, K: int, rank_tol: float = RANK_TOL) -> GreedySelection:
    """Pivoted Cholesky selection of ``K`` nodes from the candidate snapshots.

    At each step the candidate with the largest squared distance to the span
    of the already selected snapshots is taken; only one Gramian row is
    formed per step.
    """
    M = len(candidates)
    if not 1 <= K <= M:
        raise ValueError(f"need 1 <= K <= M, got K={K}, M={M}")
    V = candidates.matrix()
    wV = candidates.weights[:, None] * V
    perm = np.arange(M)
    resid = np.einsum("ij,ij->j", wV, V)
    L = np.zeros((M, K))
    w_max0 = float(resid.max())
    history = []
    for k in range(K):
        p = k + _argmax_lowest_index(resid[k:], perm[k:])
        wp = float(resid[p])
        if wp <= rank_tol * w_max0 or wp <= 0.0:
            raise RankDeficient(k, K, wp)
        history.append(wp)
        perm[[k, p]] = perm[[p, k]]
        resid[[k, p]] = resid[[p, k]]
        L[[k, p]] = L[[p, k]]
        L[k, k] = np.sqrt(wp)
        rest = perm[k + 1 :]
        r = V[:, rest].T @ wV[:, perm[k]] - L[k + 1 :, :k] @ L[k, :k]
        L[k + 1 :, k] = r / L[k, k]
        resid[k + 1 :] -= L[k + 1 :, k] ** 2
        resid[k] = 0.0
    final = np.empty(M)
    final[perm] = resid
    return GreedySelection(
        pivots=perm[:K].copy(),
        perm=perm,
        factor=L,
        residuals=np.array(history),
        final_residuals=final,
    )


@dataclass
class BiFiModel:
    """Low- and high-fidelity bases aligned with the selected nodes."""

    selection: GreedySelection | None
    lo_basis: tuple[Snapshot, ...]
    hi_basis: tuple[Snapshot, ...]

    def __post_init__(self):
        self.lo_basis = tuple(self.lo_basis)
        self.hi_basis = tuple(self.hi_basis)
        if len(self.lo_basis) != len(self.hi_basis):
            raise LayoutMismatch("low- and high-fidelity bases differ in size")
        for s in self.lo_basis[1:]:
            check_compatible(self.lo_basis[0], s)
        for s in self.hi_basis[1:]:
            if s.layout != self.hi_basis[0].layout:
                raise LayoutMismatch("high-fidelity basis is not layout-homogeneous")

    @property
    def K(self) -> int:
        return len(self.lo_basis)

    @cached_property
    def gramian(self) -> np.ndarray:
        if self.K == 0:
            return np.zeros((0, 0))
        V = np.stack([s.values for s in self.lo_basis], axis=1)
        G = V.T @ (self.lo_basis[0].weights[:, None] * V)
        return 0.5 * (G + G.T)

    @cached_property
    def _factor(self):
        G = self.gramian
        try:
            return sla.cho_factor(G, lower=True)
        except np.linalg.LinAlgError:
            pass
        reg = RANK_TOL * np.trace(G) / self.K
        try:
            return sla.cho_factor(G + reg * np.eye(self.K), lower=True)
        except np.linalg.LinAlgError:
            raise SingularGramian(self.condition_number()) from None

    def condition_number(self) -> float:
        """2-norm condition number of the Gramian (``inf`` if singular)."""
        ev = np.linalg.eigvalsh(self.gramian)
        return float(ev[-1] / ev[0]) if ev[0] > 0 else float("inf")

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.gramian)[0])

    def restrict(self, names: Sequence[str]) -> "BiFiModel":
        return BiFiModel(
            self.selection,
            [s.select(names) for s in self.lo_basis],
            [s.select(names) for s in self.hi_basis],
        )

    def save(self, directory) -> dict:
        d = Path(directory)
        inventory = {}
        if self.selection is not None:
            inventory.update(self.selection.save(d))
        for tag, basis in (("lo", self.lo_basis), ("hi", self.hi_basis)):
            for k, s in enumerate(basis):
                inventory[f"{tag}_{k:04d}.bin"] = s.save(d / f"{tag}_{k:04d}")
        io.write_json(d / "model.json", {"K": self.K, "has_selection": self.selection is not None})
        return inventory

    @classmethod
    def load(cls, directory) -> "BiFiModel":
        d = Path(directory)
        man = io.read_json(d / "model.json")
        sel = GreedySelection.load(d) if man["has_selection"] else None
        lo = [Snapshot.load(d / f"lo_{k:04d}") for k in range(man["K"])]
        hi = [Snapshot.load(d / f"hi_{k:04d}") for k in range(man["K"])]
        return cls(sel, lo, hi)


def build_model(selection: GreedySelection, lo_candidates: Sequence[Snapshot], hi_basis) -> BiFiModel:
    lo = [lo_candidates[int(i)] for i in selection.pivots]
    return BiFiModel(selection, lo, hi_basis)


def project_coefficients(query: Snapshot, model: BiFiModel) -> np.ndarray:
    """Galerkin coefficients ``c`` solving ``G c = f``, ``f_k = <query, u_k>``."""
    if model.K == 0:
        return np.zeros(0)
    check_compatible(query, model.lo_basis[0])
    f = np.array([inner_product(query, s) for s in model.lo_basis])
    return sla.cho_solve(model._factor, f)


def reconstruct(c: np.ndarray, model: BiFiModel, z=None) -> Snapshot:
    """``sum_k c_k u^H(z_k)``, tagged as a bi-fidelity snapshot."""
    c = np.asarray(c, dtype=float)
    if c.shape != (model.K,):
        raise LayoutMismatch(f"expected {model.K} coefficients, got shape {c.shape}")
    if model.K == 0:
        raise LayoutMismatch("cannot reconstruct from an empty basis")
    H = np.stack([s.values for s in model.hi_basis], axis=1)
    z = model.hi_basis[0].z if z is None else z
    out = model.hi_basis[0].with_values(H @ c, fidelity="bifi", z=z)
    return out


def projection_error(query: Snapshot, model: BiFiModel) -> float:
    """Weighted norm of the component of ``query`` orthogonal to the basis."""
    if model.K == 0:
        return query.norm()
    c = project_coefficients(query, model)
    V = np.stack([s.values for s in model.lo_basis], axis=1)
    r = query.values - V @ c
    return float(np.sqrt(max(np.dot(query.weights * r, r), 0.0)))


class GroupedBiFi:
    """Bi-fidelity approximation applied separately to groups of components.

    ``groups`` maps a group name to component names; each group gets its own
    Gramian and coefficients while all groups share the selected nodes.
    """

    def __init__(self, model: BiFiModel, groups: Mapping[str, Sequence[str]]):
        self.base = model
        self.groups = {g: tuple(c) for g, c in groups.items()}
        self.models = {g: model.restrict(c) for g, c in self.groups.items()}

    @property
    def components(self) -> tuple[str, ...]:
        return tuple(c for comps in self.groups.values() for c in comps)

    def coefficients(self, query: Snapshot) -> dict[str, np.ndarray]:
        return {g: project_coefficients(query.select(c), self.models[g]) for g, c in self.groups.items()}

    def reconstruct(self, coeffs: Mapping[str, np.ndarray], z=None) -> Snapshot:
        parts = [reconstruct(coeffs[g], self.models[g], z=z) for g in self.groups]
        values = np.concatenate([p.values for p in parts])
        first = parts[0]
        return Snapshot(
            values,
            np.concatenate([p.weights for p in parts]),
            self.components,
            first.grid_shape,
            first.z,
            "bifi",
            dict(first.meta),
        )

    def approximate(self, query: Snapshot) -> Snapshot:
        return self.reconstruct(self.coefficients(query), z=query.z)
