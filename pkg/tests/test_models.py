import itertools
import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from hflow.algebra import DenseTensor, bracket, diamond, group_act, hodge_star, inner, levi_civita, so_basis
from hflow.harness import inner_product_constants
from hflow.models import (
    HKind,
    g2_form,
    hodge_dual_g2,
    lambda_pair,
    model,
    param_g2,
    spin7_form,
    su2_pair,
    verify_model,
)

ALL_KINDS = ["trivial4", "trivial5", "u2", "u3", "su2", "su3", "su4", "g2", "spin7"]


def so_rank(hm, tol=1e-8):
    """Numeric rank of A -> A . xi0 on so(n), via an SVD of its coordinate matrix."""
    cols = []
    for _, E in so_basis(hm.n):
        img = diamond(E, hm.xi0)
        cols.append(np.concatenate([t.data.ravel() for t in img]))
    s = np.linalg.svd(np.stack(cols, axis=1), compute_uv=False)
    return int(np.sum(s > tol * s[0]))


@pytest.mark.parametrize("text,tag,m,n", [
    ("g2", "g2", 0, 7), ("Spin7", "spin7", 0, 8), ("U(3)", "u", 3, 6),
    ("su2", "su", 2, 4), ("trivial5", "trivial", 5, 5),
])
def test_kind_parsing(text, tag, m, n):
    k = HKind.parse(text)
    assert (k.tag, k.m, k.n) == (tag, m, n)
    assert HKind.from_code(k.code, k.n) == k


@pytest.mark.parametrize("bad", ["u1", "sp2", "g3", ""])
def test_kind_rejects_invalid(bad):
    with pytest.raises(ValueError):
        HKind.parse(bad)


@pytest.mark.parametrize("kind,c", [("g2", 6.0), ("spin7", 16.0), ("u3", 4.0), ("u2", 4.0), ("trivial5", 1.0)])
def test_constants(kind, c):
    assert model(kind).c == c


@pytest.mark.parametrize("m,lam", [(2, (4.0, 6.0)), (3, (12.0, 8.0)), (4, (32.0, 12.0))])
def test_su_lambda_pairs(m, lam):
    assert model(f"su{m}").c == lam == lambda_pair(m)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_dimensions_add_up_and_match_rank(kind):
    hm = model(kind)
    n = hm.n
    assert hm.dim_h + hm.dim_m == n * (n - 1) // 2
    assert so_rank(hm) == hm.dim_m


def test_su_dim_m_formula():
    for m in (2, 3, 4):
        assert model(f"su{m}").dim_m == m * m - m + 1


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_verify_model_is_exact(kind):
    rep = verify_model(model(kind))
    assert rep.ok(1e-12), rep.lines()
    assert rep.residuals


def test_g2_identities_are_exact_zero():
    rep = verify_model(model("g2"))
    for key in ("psi psi - 24 g", "phi psi + 4 phi", "phi psi contraction", "<X.phi, X.phi> - 6|X|^2"):
        assert rep.residuals[key] == 0.0


def test_psi_is_hodge_dual_of_phi():
    psi = hodge_dual_g2()
    assert inner(psi, psi) == pytest.approx(7.0, abs=1e-14)
    # independent Levi-Civita contraction, written out with explicit loops
    phi = g2_form().data
    eps = levi_civita(7)
    star = np.zeros((7,) * 4)
    for idx in itertools.combinations(range(7), 4):
        rest = [i for i in range(7) if i not in idx]
        val = sum(phi[tuple(c)] * eps[tuple(c) + idx] for c in itertools.permutations(rest)) / 6
        for perm in itertools.permutations(range(4)):
            sgn = np.linalg.det(np.eye(4)[list(perm)])
            star[tuple(idx[p] for p in perm)] = round(sgn) * val
    assert np.array_equal(psi.data, star)


def test_spin7_self_dual_and_norm():
    Phi = spin7_form()
    assert np.array_equal(hodge_star(Phi.data), Phi.data)
    assert inner(Phi, Phi) == pytest.approx(14.0, abs=1e-13)


def test_u2_complex_structure():
    J = model("u2").xi0[0].data
    assert np.array_equal(J @ J, -np.eye(4))


def test_su2_bracket_is_twice_J():
    C2, D2 = su2_pair()
    J = model("su2").xi0[0].data
    assert np.array_equal(bracket(C2, D2), 2 * J)
    # both anticommute with J, i.e. lie in the second summand
    assert not (C2 @ J + J @ C2).any() and not (D2 @ J + J @ D2).any()


def test_su_summands_orthogonal():
    hm = model("su3")
    J = hm.xi0[0].data
    rng = np.random.default_rng(3)
    for _ in range(10):
        W = rng.normal(size=(6, 6))
        W = W - W.T
        B = 0.5 * (W + J @ W @ J)  # anticommutes with J
        val = inner(diamond(J, hm.xi0), diamond(B, hm.xi0))
        assert abs(val) < 1e-12


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_inner_product_constants_measured(kind):
    hm = model(kind)
    res = inner_product_constants(hm, 20, seed=5)
    expected = {"c": hm.c} if hm.single_c else {"lambda1": hm.c[0], "lambda2": hm.c[1]}
    for key, (lo, hi) in res.items():
        assert abs(lo - expected[key]) < 1e-10 and abs(hi - expected[key]) < 1e-10


def test_model_rejects_bad_m():
    with pytest.raises(ValueError):
        model("u1")


# ---------------------------------------------------------------- G2 parametrisation


def test_param_g2_trivial_cases():
    phi = g2_form()
    assert np.array_equal(param_g2(1.0, np.zeros(7)).data, phi.data)
    assert np.array_equal(param_g2(-1.0, np.zeros(7)).data, phi.data)


def test_param_g2_rejects_non_unit():
    with pytest.raises(ValueError, match="unit"):
        param_g2(0.5, np.zeros(7))


@settings(max_examples=30, deadline=None)
@given(v=st.lists(st.floats(-1, 1), min_size=8, max_size=8).filter(lambda v: sum(x * x for x in v) > 1e-2))
def test_param_g2_sign_symmetry_and_orbit(v):
    v = np.array(v) / np.linalg.norm(v)
    f, X = v[0], v[1:]
    a = param_g2(f, X)
    b = param_g2(-f, -X)
    assert np.max(np.abs(a.data - b.data)) < 1e-12
    # same orbit: the metric identities of phi0 still hold exactly
    assert np.max(np.abs(np.einsum("aij,bij->ab", a.data, a.data) - 6 * np.eye(7))) < 1e-12
    assert inner(a, a) == pytest.approx(7.0, abs=1e-12)


def _gram_spectrum(phi):
    cols = [diamond(E, phi)[0].data.ravel() / math.sqrt(6) for _, E in so_basis(7)]
    L = np.stack(cols, axis=1)
    ev = np.linalg.eigvalsh(L.T @ L)
    return ev[ev > 1e-8]


def test_param_g2_orbit_point_has_same_gram_spectrum():
    hm = model("g2")
    ref = _gram_spectrum(g2_form())
    got = _gram_spectrum(param_g2(0.0, np.eye(7)[0]))
    assert len(got) == len(ref) == hm.dim_m
    # a single eigenvalue on m: the constant c is the same at every orbit point
    assert np.ptp(got) < 1e-12 and abs(got[0] - ref[0]) < 1e-12


def test_param_g2_matches_rotated_phi0():
    # any rotation applied to phi0 stays on the orbit with identical identities
    rng = np.random.default_rng(11)
    W = rng.normal(size=(7, 7))
    R = scipy.linalg.expm(W - W.T)
    rot = group_act(R, DenseTensor(g2_form().data, 0, 3))
    rot = rot.parts[0] if hasattr(rot, "parts") else rot
    assert np.max(np.abs(_gram_spectrum(rot) - _gram_spectrum(g2_form()))) < 1e-11
