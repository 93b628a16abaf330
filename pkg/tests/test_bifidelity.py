import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bifivfp.bifidelity import (
    BiFiModel,
    GreedySelection,
    GroupedBiFi,
    build_model,
    greedy_select,
    project_coefficients,
    projection_error,
    reconstruct,
)
from bifivfp.errors import LayoutMismatch, RankDeficient, SingularGramian
from bifivfp.snapshot import inner_product
from oracles import make_set, naive_greedy


@settings(max_examples=50)
@given(st.integers(2, 30), st.integers(5, 200), st.integers(0, 2**31 - 1), st.data())
def test_pivots_match_naive_oracle(M, n, seed, data):
    rng = np.random.default_rng(seed)
    V = rng.normal(size=(n, M)) * rng.uniform(0.1, 3.0, size=M)
    w = rng.uniform(0.5, 2.0, size=n)
    K = data.draw(st.integers(1, min(M, n)))
    sel = greedy_select(make_set(V, w), K)
    assert sel.pivots.tolist() == naive_greedy(V, w, K)
    G = V.T @ (w[:, None] * V)
    Gs = G[np.ix_(sel.pivots, sel.pivots)]
    assert np.linalg.norm(sel.gramian - Gs) <= 1e-10 * np.linalg.norm(Gs)


def test_full_rank_reconstructs_gramian(rng):
    V = rng.normal(size=(40, 12))
    S = make_set(V)
    sel = greedy_select(S, 12)
    G = S.gramian()
    assert np.linalg.norm(sel.full_gramian_estimate() - G) <= 1e-10 * np.linalg.norm(G)
    assert np.all(np.diff(sel.residuals) <= 1e-12 * sel.residuals[0])


def test_orthonormal_candidates_give_identity(rng):
    Q, _ = np.linalg.qr(rng.normal(size=(20, 6)))
    S = make_set(Q, w=np.ones(20))
    sel = greedy_select(S, 6)
    assert sel.pivots.tolist() == list(range(6))  # all ties, lowest index first
    assert np.allclose(sel.L, np.eye(6), atol=1e-12)


def test_duplicate_never_selected_twice(rng):
    V = rng.normal(size=(30, 5))
    V = np.concatenate([V, V[:, [2]]], axis=1)
    sel = greedy_select(make_set(V), 5)
    assert len(set(sel.pivots.tolist())) == 5
    twin = 5 if 2 in sel.pivots.tolist() else 2
    assert twin not in sel.pivots.tolist()
    assert sel.final_residuals[twin] < 1e-12 * sel.residuals[0]


def test_rank_deficiency_reports_achieved_rank(rng):
    B = rng.normal(size=(30, 3))
    V = B @ rng.normal(size=(3, 8))
    with pytest.raises(RankDeficient) as info:
        greedy_select(make_set(V), 5)
    assert info.value.achieved_rank == 3 and info.value.requested == 5


def test_bad_K():
    with pytest.raises(ValueError):
        greedy_select(make_set(np.eye(3)), 4)


@settings(max_examples=30)
@given(st.floats(1e-3, 1e3), st.integers(0, 10_000))
def test_scale_equivariance(s, seed):
    V = np.random.default_rng(seed).normal(size=(25, 10))
    a = greedy_select(make_set(V), 6)
    b = greedy_select(make_set(s * V), 6)
    assert a.pivots.tolist() == b.pivots.tolist()
    assert np.allclose(b.residuals, s**2 * a.residuals, rtol=1e-9)


@settings(max_examples=200)
@given(st.integers(0, 2**31 - 1))
def test_cauchy_schwarz(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 50))
    S = make_set(rng.normal(size=(n, 2)) * 10 ** rng.uniform(-3, 3), w=rng.uniform(0.01, 1.0, n))
    a, b = S[0], S[1]
    assert inner_product(a, b) ** 2 <= inner_product(a, a) * inner_product(b, b) * (1 + 1e-12)
    scale = np.sqrt(inner_product(a, a) * inner_product(b, b))
    assert abs(inner_product(a, b) - inner_product(b, a)) <= 1e-13 * scale


@pytest.fixture
def model(rng):
    V = rng.normal(size=(40, 15))
    S = make_set(V)
    sel = greedy_select(S, 6)
    hi = make_set(2.0 * V + 1.0, fidelity="hi")
    return build_model(sel, list(S), [hi[int(i)] for i in sel.pivots]), S


def test_basis_element_reproduces_itself(model):
    m, _ = model
    for j in range(m.K):
        assert np.allclose(project_coefficients(m.lo_basis[j], m), np.eye(m.K)[j], atol=1e-10)


def test_linearity_within_span(model):
    m, _ = model
    q = m.lo_basis[0].with_values(2 * m.lo_basis[0].values + 3 * m.lo_basis[1].values)
    c = project_coefficients(q, m)
    assert np.allclose(c, np.r_[2.0, 3.0, np.zeros(m.K - 2)], atol=1e-8)
    assert projection_error(q, m) < 1e-8


def test_orthogonal_query_gives_zero(model):
    m, _ = model
    V = np.stack([s.values for s in m.lo_basis], axis=1)
    w = m.lo_basis[0].weights
    Q, _ = np.linalg.qr(np.sqrt(w)[:, None] * np.concatenate([V, np.random.default_rng(0).normal(size=(40, 1))], axis=1))
    q = m.lo_basis[0].with_values(Q[:, -1] / np.sqrt(w))
    assert np.allclose(project_coefficients(q, m), 0.0, atol=1e-10)


def test_projection_idempotent(model):
    m, S = model
    q = S[14]
    c = project_coefficients(q, m)
    V = np.stack([s.values for s in m.lo_basis], axis=1)
    c2 = project_coefficients(q.with_values(V @ c), m)
    assert np.max(np.abs(c2 - c)) < 1e-12 * max(1.0, np.abs(c).max())


def test_reconstruct_rules(model):
    m, _ = model
    for j in range(m.K):
        out = reconstruct(np.eye(m.K)[j], m)
        assert np.array_equal(out.values, m.hi_basis[j].values)
        assert out.fidelity == "bifi"
    assert np.all(reconstruct(np.zeros(m.K), m, z=[9.0]).values == 0)
    with pytest.raises(LayoutMismatch):
        reconstruct(np.zeros(m.K + 1), m)


def test_projection_error_monotone_in_K(rng):
    V = rng.normal(size=(50, 8)) @ rng.normal(size=(8, 40)) + 1e-3 * rng.normal(size=(50, 40))
    S = make_set(V)
    sel = greedy_select(S, 10)
    q = make_set(rng.normal(size=(50, 8)) @ rng.normal(size=(8, 1)))[0]
    errs = [projection_error(q, BiFiModel(sel, [], []))]
    for K in range(1, 11):
        lo = [S[int(i)] for i in sel.pivots[:K]]
        errs.append(projection_error(q, BiFiModel(sel, lo, lo)))
    assert errs[0] == pytest.approx(q.norm())
    assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))


def test_empty_model():
    m = BiFiModel(None, [], [])
    q = make_set(np.ones((4, 1)))[0]
    assert project_coefficients(q, m).size == 0


def test_singular_gramian_raises():
    # a zero basis cannot be rescued by the trace-scaled ridge
    S = make_set(np.zeros((5, 2)), fidelity="lo")
    m = BiFiModel(None, [S[0], S[1]], [S[0], S[1]])
    with pytest.raises(SingularGramian):
        project_coefficients(S[0], m)


def test_near_singular_uses_regularisation():
    v = np.linspace(0.0, 1.0, 10)
    V = np.stack([v + 1.0, v + 1.0 + 1e-9 * np.sin(7 * v)], axis=1)
    S = make_set(V)
    m = BiFiModel(None, list(S), list(S))
    c = project_coefficients(S[0], m)
    assert np.all(np.isfinite(c))
    assert m.condition_number() > 1e12


def test_model_save_load_bit_exact(model, tmp_path):
    m, S = model
    m.save(tmp_path)
    m2 = BiFiModel.load(tmp_path)
    assert np.array_equal(m2.selection.factor, m.selection.factor)
    assert m2.selection.pivots.tolist() == m.selection.pivots.tolist()
    for a, b in zip(m.hi_basis, m2.hi_basis):
        assert np.array_equal(a.values, b.values)
    q = S[10]
    assert np.array_equal(project_coefficients(q, m), project_coefficients(q, m2))


def test_grouped_matches_separate_models(rng):
    V = rng.normal(size=(40, 12))
    S = make_set(V, names=("rho", "mom_x"))
    sel = greedy_select(S, 4)
    lo = [S[int(i)] for i in sel.pivots]
    hi = [s.with_values(3 * s.values, fidelity="hi") for s in lo]
    grouped = GroupedBiFi(BiFiModel(sel, lo, hi), {"rho": ["rho"], "mom": ["mom_x"]})
    q = S[11]
    coeffs = grouped.coefficients(q)
    m_rho = BiFiModel(sel, [s.select(["rho"]) for s in lo], [s.select(["rho"]) for s in hi])
    assert np.allclose(coeffs["rho"], project_coefficients(q.select(["rho"]), m_rho))
    out = grouped.approximate(q)
    assert out.components == ("rho", "mom_x")
    assert np.allclose(out.field("rho"), reconstruct(coeffs["rho"], m_rho).field("rho"))
    # a basis element is reproduced exactly in every group
    assert np.allclose(grouped.approximate(lo[2]).values, hi[2].values, atol=1e-10)
