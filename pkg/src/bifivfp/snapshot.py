"""Snapshots: flattened macroscopic fields of one parameter sample."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import io
from .errors import LayoutMismatch


@dataclass(frozen=True, eq=False)
class Snapshot:
    """Component fields stacked into one vector with aligned quadrature weights.

    ``values`` is ``concat(field_c.ravel() for c in components)``.
    """

    values: np.ndarray
    weights: np.ndarray
    components: tuple[str, ...]
    grid_shape: tuple[int, ...]
    z: np.ndarray
    fidelity: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.values.shape != self.weights.shape or self.values.ndim != 1:
            raise LayoutMismatch("values and weights must be flat arrays of equal length")
        expected = len(self.components) * int(np.prod(self.grid_shape))
        if self.values.size != expected:
            raise LayoutMismatch(f"{self.values.size} values do not fit layout of size {expected}")
        if np.any(self.weights <= 0):
            raise LayoutMismatch("quadrature weights must be positive")

    @classmethod
    def from_fields(cls, fields: dict, cell_weight: float, z, fidelity: str, meta=None) -> "Snapshot":
        names = tuple(fields)
        arrays = [np.asarray(fields[n], dtype=float) for n in names]
        shape = arrays[0].shape
        if any(a.shape != shape for a in arrays):
            raise LayoutMismatch("component fields must share the grid shape")
        values = np.concatenate([a.ravel() for a in arrays])
        return cls(
            values=values,
            weights=np.full(values.shape, float(cell_weight)),
            components=names,
            grid_shape=tuple(shape),
            z=np.asarray(z, dtype=float).copy(),
            fidelity=fidelity,
            meta=dict(meta or {}),
        )

    @property
    def layout(self) -> tuple:
        return (self.components, self.grid_shape)

    @property
    def field_size(self) -> int:
        return int(np.prod(self.grid_shape))

    def _slice(self, name: str) -> slice:
        try:
            j = self.components.index(name)
        except ValueError:
            raise KeyError(f"snapshot has no component {name!r}; has {self.components}") from None
        n = self.field_size
        return slice(j * n, (j + 1) * n)

    def field(self, name: str) -> np.ndarray:
        return self.values[self._slice(name)].reshape(self.grid_shape)

    def select(self, names: Sequence[str]) -> "Snapshot":
        names = tuple(names)
        if names == self.components:
            return self
        idx = np.concatenate([np.arange(self.values.size)[self._slice(n)] for n in names])
        return Snapshot(
            self.values[idx], self.weights[idx], names, self.grid_shape, self.z, self.fidelity, dict(self.meta)
        )

    def with_values(self, values: np.ndarray, fidelity: str | None = None, z=None) -> "Snapshot":
        return Snapshot(
            np.asarray(values, dtype=float),
            self.weights,
            self.components,
            self.grid_shape,
            self.z if z is None else np.asarray(z, dtype=float),
            self.fidelity if fidelity is None else fidelity,
            dict(self.meta),
        )

    def norm(self) -> float:
        return float(np.sqrt(inner_product(self, self)))

    # -- persistence -----------------------------------------------------

    def save(self, stem) -> str:
        """Write ``<stem>.bin`` (values and weights) and ``<stem>.json``."""
        stem = Path(stem)
        digest = io.write_array(stem.with_suffix(".bin"), np.stack([self.values, self.weights]))
        io.write_json(
            stem.with_suffix(".json"),
            {
                "components": list(self.components),
                "grid_shape": list(self.grid_shape),
                "z": [float(v) for v in self.z],
                "fidelity": self.fidelity,
                "meta": self.meta,
                "sha256": digest,
            },
        )
        return digest

    @classmethod
    def load(cls, stem) -> "Snapshot":
        stem = Path(stem)
        arr = io.read_array(stem.with_suffix(".bin"))
        man = io.read_json(stem.with_suffix(".json"))
        return cls(
            values=arr[0].copy(),
            weights=arr[1].copy(),
            components=tuple(man["components"]),
            grid_shape=tuple(man["grid_shape"]),
            z=np.array(man["z"], dtype=float),
            fidelity=man["fidelity"],
            meta=man.get("meta", {}),
        )

    @staticmethod
    def is_valid(stem) -> bool:
        """True if both files exist and the binary matches its recorded checksum."""
        stem = Path(stem)
        b, j = stem.with_suffix(".bin"), stem.with_suffix(".json")
        if not (b.exists() and j.exists()):
            return False
        try:
            return io.read_json(j).get("sha256") == io.file_sha256(b)
        except (OSError, ValueError):
            return False


def check_compatible(a: Snapshot, b: Snapshot) -> None:
    if a.layout != b.layout or a.fidelity != b.fidelity:
        raise LayoutMismatch(
            f"incompatible snapshots: {a.fidelity}{a.layout} vs {b.fidelity}{b.layout}"
        )


def inner_product(a: Snapshot, b: Snapshot) -> float:
    """Discrete weighted L2 inner product over all components."""
    check_compatible(a, b)
    return float(np.dot(a.weights * a.values, b.values))


class SnapshotSet(Sequence):
    """Ordered, layout-homogeneous collection of snapshots."""

    def __init__(self, snapshots: Iterable[Snapshot], require_distinct_z: bool = True):
        self._items = list(snapshots)
        if not self._items:
            raise ValueError("empty snapshot set")
        first = self._items[0]
        for s in self._items[1:]:
            check_compatible(first, s)
        if require_distinct_z:
            keys = {tuple(s.z.tolist()) for s in self._items}
            if len(keys) != len(self._items):
                raise LayoutMismatch("snapshot set contains repeated parameter vectors")

    def __getitem__(self, i):
        return self._items[i]

    def __len__(self):
        return len(self._items)

    @property
    def weights(self) -> np.ndarray:
        return self._items[0].weights

    def matrix(self) -> np.ndarray:
        """Snapshot values as columns, shape ``(n_values, M)``."""
        return np.stack([s.values for s in self._items], axis=1)

    def select(self, names) -> "SnapshotSet":
        return SnapshotSet([s.select(names) for s in self._items], require_distinct_z=False)

    def gramian(self) -> np.ndarray:
        V = self.matrix()
        return V.T @ (self.weights[:, None] * V)
