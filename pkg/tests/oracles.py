"""Reference implementations shared by several test modules."""
import numpy as np

from bifivfp.snapshot import Snapshot, SnapshotSet


def make_set(V, w=None, fidelity="lo", names=("a",)):
    n, M = V.shape
    w = np.full(n, 1.0 / n) if w is None else w
    out = []
    for j in range(M):
        k = n // len(names)
        fields = {c: V[i * k : (i + 1) * k, j] for i, c in enumerate(names)}
        s = Snapshot.from_fields(fields, 1.0, [float(j)], fidelity)
        out.append(Snapshot(s.values, w.copy(), s.components, s.grid_shape, s.z, fidelity))
    return SnapshotSet(out)


def naive_greedy(V, w, K):
    """Reference: recompute every residual by dense weighted least squares."""
    sw = np.sqrt(w)[:, None]
    A = sw * V
    chosen = []
    for _ in range(K):
        if chosen:
            B = A[:, chosen]
            coef, *_ = np.linalg.lstsq(B, A, rcond=None)
            R = A - B @ coef
        else:
            R = A
        r = (R**2).sum(axis=0)
        r[chosen] = -np.inf
        chosen.append(int(np.flatnonzero(r >= r.max() - 1e-12 * abs(r.max()))[0]))
    return chosen
