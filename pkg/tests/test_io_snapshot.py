import numpy as np
import pytest

from bifivfp import io
from bifivfp.errors import ConfigError, LayoutMismatch
from bifivfp.grid import Grid, ModelParams
from bifivfp.snapshot import Snapshot, SnapshotSet, check_compatible, inner_product


def snap(values, z=(0.0,), fidelity="lo", w=0.1, names=("a",)):
    values = np.asarray(values, dtype=float)
    n = values.size // len(names)
    fields = {c: values[j * n : (j + 1) * n] for j, c in enumerate(names)}
    return Snapshot.from_fields(fields, w, z, fidelity)


def test_array_roundtrip(tmp_path):
    a = np.arange(24.0).reshape(2, 3, 4) / 7
    digest = io.write_array(tmp_path / "a.bin", a)
    assert np.array_equal(io.read_array(tmp_path / "a.bin"), a)
    assert digest == io.file_sha256(tmp_path / "a.bin")


def test_array_header_layout(tmp_path):
    io.write_array(tmp_path / "a.bin", np.ones((2, 5)))
    raw = (tmp_path / "a.bin").read_bytes()
    assert raw[:5] == b"BIFI1"
    assert int.from_bytes(raw[5:9], "little") == 2
    assert raw[25:29] == b"<f8\x00"
    assert len(raw) == 29 + 8 * 10


def test_bad_magic_and_truncation(tmp_path):
    p = tmp_path / "a.bin"
    io.write_array(p, np.ones(4))
    raw = p.read_bytes()
    p.write_bytes(b"XXXXX" + raw[5:])
    with pytest.raises(io.FormatError):
        io.read_array(p)
    p.write_bytes(raw[:-3])
    with pytest.raises(io.FormatError):
        io.read_array(p)


def test_snapshot_save_load_bit_exact(tmp_path):
    s = snap(np.random.default_rng(0).normal(size=12), z=(0.5, -1.0), names=("rho", "mom_x"))
    s.save(tmp_path / "s")
    t = Snapshot.load(tmp_path / "s")
    assert np.array_equal(s.values, t.values) and np.array_equal(s.weights, t.weights)
    assert t.components == ("rho", "mom_x") and np.array_equal(t.z, s.z)
    assert Snapshot.is_valid(tmp_path / "s")


def test_is_valid_detects_corruption(tmp_path):
    s = snap(np.ones(4))
    s.save(tmp_path / "s")
    b = tmp_path / "s.bin"
    raw = bytearray(b.read_bytes())
    raw[-1] ^= 1
    b.write_bytes(bytes(raw))
    assert not Snapshot.is_valid(tmp_path / "s")
    assert not Snapshot.is_valid(tmp_path / "missing")


def test_snapshot_invariants():
    with pytest.raises(LayoutMismatch):
        Snapshot(np.ones(3), np.ones(4), ("a",), (3,), np.zeros(1), "lo")
    with pytest.raises(LayoutMismatch):
        Snapshot(np.ones(3), np.array([1.0, 0.0, 1.0]), ("a",), (3,), np.zeros(1), "lo")
    with pytest.raises(LayoutMismatch):
        Snapshot(np.ones(4), np.ones(4), ("a",), (3,), np.zeros(1), "lo")


def test_field_select():
    s = snap(np.arange(6.0), names=("rho", "mom_x"))
    assert np.array_equal(s.field("mom_x"), [3.0, 4.0, 5.0])
    assert np.array_equal(s.select(["mom_x"]).values, [3.0, 4.0, 5.0])
    with pytest.raises(KeyError):
        s.field("nope")


def test_unit_constant_inner_product():
    g = Grid(n_x=50)
    s = Snapshot.from_fields({"a": np.ones(50)}, g.cell_volume, [0.0], "lo")
    assert inner_product(s, s) == pytest.approx(1.0, abs=1e-14)


def test_fourier_modes_orthogonal():
    g = Grid(n_x=64)
    x = g.x
    a = Snapshot.from_fields({"a": np.sin(2 * np.pi * x)}, g.cell_volume, [0.0], "lo")
    b = Snapshot.from_fields({"a": np.cos(2 * np.pi * x)}, g.cell_volume, [1.0], "lo")
    assert abs(inner_product(a, b)) < 1e-14


def test_inner_product_layout_checks():
    a = snap(np.ones(4))
    with pytest.raises(LayoutMismatch):
        inner_product(a, snap(np.ones(4), fidelity="hi"))
    with pytest.raises(LayoutMismatch):
        inner_product(a, snap(np.ones(6)))


def test_snapshot_set_rules():
    a, b = snap(np.ones(4), z=(0.0,)), snap(np.ones(4), z=(1.0,))
    S = SnapshotSet([a, b])
    assert S.matrix().shape == (4, 2)
    with pytest.raises(LayoutMismatch):
        SnapshotSet([a, snap(np.ones(4), z=(0.0,))])
    with pytest.raises(LayoutMismatch):
        SnapshotSet([a, snap(np.ones(4), z=(2.0,), fidelity="hi")])


def test_grid_coarsen_restrict():
    g = Grid(n_x=64)
    c = g.coarsen(4)
    assert c.n_x == 16 and c.n_v == g.n_v
    assert c.nesting_factor(g) == 4
    f = np.sin(2 * np.pi * g.x)
    assert np.allclose(c.restrict(f, g), np.sin(2 * np.pi * c.x), atol=1e-15)
    with pytest.raises(ConfigError):
        Grid(n_x=10).coarsen(4)


def test_params_validation():
    with pytest.raises(ConfigError):
        ModelParams(epsilon=0.0)
    with pytest.raises(ConfigError):
        ModelParams(dim=3)
    p = ModelParams(epsilon=1e-6)
    assert ModelParams.from_dict(p.to_dict()) == p
