import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from hflow.algebra import DimensionError, diamond, group_act, hodge_star, inner, so_basis
from hflow.models import model, param_g2
from hflow.torsion import (
    diamond_adjoint,
    g2_full_torsion,
    g2_torsion_from_full,
    laplacian_decomposition_residual,
    laplacian_terms,
    pi_h,
    pi_m,
    torsion_from_gradient,
)

KINDS = ["trivial4", "u2", "u3", "su2", "su3", "g2", "spin7"]


def random_skew(rng, n, scale=1.0):
    C = rng.normal(size=(n, n))
    return scale * (C - C.T)


def random_point(hm, rng):
    R = scipy.linalg.expm(random_skew(rng, hm.n, 0.7))
    return group_act(R, hm.xi0)


def loop_adjoint(xi, w):
    """W with <W, B> = inner(w, B . xi), solved from the Gram system of so_basis."""
    basis = [E for _, E in so_basis(xi.n)]
    G = np.array([[np.sum(a * b) for b in basis] for a in basis])
    rhs = np.array([inner(w, diamond(E, xi)) for E in basis])
    coef = np.linalg.solve(G, rhs)
    return sum(c * E for c, E in zip(coef, basis))


def svd_projector(xi):
    """Projector onto the orthogonal complement of the stabiliser, from an SVD."""
    basis = [E / np.sqrt(2) for _, E in so_basis(xi.n)]  # orthonormal in sum_ij A_ij B_ij
    L = np.stack([np.concatenate([t.data.ravel() for t in diamond(E, xi)]) for E in basis], axis=1)
    _, s, Vt = np.linalg.svd(L)
    V = Vt[s > 1e-9 * s[0]].T
    P = V @ V.T

    def apply(W):
        coords = np.array([np.sum(W * E) for E in basis])
        return sum(c * E for c, E in zip(P @ coords, basis))

    return apply


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


@pytest.mark.parametrize("kind", KINDS)
def test_adjoint_matches_basis_loop(kind, rng):
    hm = model(kind)
    xi = random_point(hm, rng)
    w = diamond(random_skew(rng, hm.n), xi) + diamond(rng.normal(size=(hm.n, hm.n)), xi)
    assert np.max(np.abs(diamond_adjoint(xi, w) - loop_adjoint(xi, w))) < 1e-11


def test_adjoint_rejects_mismatched_shapes():
    with pytest.raises(DimensionError):
        diamond_adjoint(model("g2").xi0, model("u2").xi0)


@pytest.mark.parametrize("kind", KINDS)
def test_pi_m_matches_svd_projector(kind, rng):
    hm = model(kind)
    xi = random_point(hm, rng)
    P = svd_projector(xi)
    for _ in range(3):
        W = random_skew(rng, hm.n)
        got = pi_m(hm, xi, W)
        assert np.max(np.abs(got - P(W))) < 1e-10
        # idempotent, self-adjoint, complementary
        assert np.max(np.abs(pi_m(hm, xi, got) - got)) < 1e-11
        V = random_skew(rng, hm.n)
        assert abs(np.sum(got * V) - np.sum(W * pi_m(hm, xi, V))) < 1e-10
        assert diamond(pi_h(hm, xi, W), xi).norm() < 1e-10


def test_pi_m_rejects_non_skew():
    hm = model("u2")
    with pytest.raises(ValueError, match="skew"):
        pi_m(hm, hm.xi0, np.eye(4))


@pytest.mark.parametrize("kind", KINDS)
def test_torsion_of_orbit_tangent_gradient(kind, rng):
    hm = model(kind)
    xi = random_point(hm, rng)
    A = [random_skew(rng, hm.n) for _ in range(hm.n)]
    grad = [diamond(a, xi) for a in A]
    tv = torsion_from_gradient(hm, xi, grad)
    assert tv.residual < 1e-10
    for l, a in enumerate(A):
        assert np.max(np.abs(tv[l] - pi_m(hm, xi, a))) < 1e-10
    # the energy identity |grad xi|^2 = c |T|^2 for the single-constant kinds
    if hm.single_c:
        g2 = sum(inner(g, g) for g in grad)
        assert g2 == pytest.approx(hm.c * tv.norm2, rel=1e-11)


def test_torsion_of_exponential_curve(rng):
    hm = model("u3")
    A = random_skew(rng, 6)
    t, dt = 0.3, 1e-5
    xi = group_act(scipy.linalg.expm(t * A), hm.xi0)
    fd = (group_act(scipy.linalg.expm((t + dt) * A), hm.xi0) - group_act(scipy.linalg.expm((t - dt) * A), hm.xi0)) * (1 / (2 * dt))
    grad = [fd] + [diamond(np.zeros((6, 6)), xi)] * 5
    tv = torsion_from_gradient(hm, xi, grad)
    assert tv.residual < 1e-8
    # the curve is generated by A, so T_1 is +-pi_m(A) at that point
    expected = pi_m(hm, xi, A)
    err = min(np.max(np.abs(tv[0] - expected)), np.max(np.abs(tv[0] + expected)))
    assert err < 1e-8
    assert np.max(np.abs(tv.T[1:])) == 0.0


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_g2_cross_check(seed):
    rng = np.random.default_rng(seed)
    hm = model("g2")
    v = rng.normal(size=8)
    v /= np.linalg.norm(v)
    phi = param_g2(v[0], v[1:])
    R = scipy.linalg.expm(random_skew(rng, 7, 0.5))
    phi = group_act(R, phi)[0]
    psi = hodge_star(phi.data)
    A = [random_skew(rng, 7) for _ in range(7)]
    grads = np.stack([diamond(a, phi)[0].data for a in A])
    T_generic = torsion_from_gradient(hm, phi, [diamond(a, phi) for a in A]).T
    T_g2 = g2_torsion_from_full(g2_full_torsion(phi, psi, grads), phi)
    assert np.max(np.abs(T_generic - T_g2)) < 1e-10


def test_g2_full_torsion_shape_check():
    hm = model("g2")
    with pytest.raises(DimensionError):
        g2_full_torsion(hm.xi0[0], hm.xi0[0], np.zeros((7, 7, 7, 7)))


def test_g2_gradient_norm_is_six_torsion_norm(rng):
    hm = model("g2")
    phi = hm.xi0
    A = [random_skew(rng, 7) for _ in range(7)]
    grad = [diamond(a, phi) for a in A]
    T = torsion_from_gradient(hm, phi, grad).T
    lhs = sum(inner(g, g) for g in grad)
    rhs = 6.0 * float(np.sum(T * T))
    assert lhs == pytest.approx(rhs, rel=1e-12)


@pytest.mark.parametrize("kind", ["u2", "su2", "g2"])
def test_laplacian_decomposition_on_exponential_curve(kind, rng):
    # xi(x) = exp(x A) acting on xi0 with A in m: T = A, div T = 0,
    # and the Laplacian is A . (A . xi)
    hm = model(kind)
    A = pi_m(hm, hm.xi0, random_skew(rng, hm.n))
    x = 0.37
    xi = group_act(scipy.linalg.expm(x * A), hm.xi0)
    lap = diamond(A, diamond(A, xi))
    T = np.zeros((hm.n, hm.n, hm.n))
    T[0] = pi_m(hm, xi, A)
    res = laplacian_decomposition_residual(hm, xi, np.zeros((hm.n, hm.n)), T, lap)
    assert res < 1e-10


def test_laplacian_terms_match_definition(rng):
    hm = model("g2")
    xi = random_point(hm, rng)
    divT = pi_m(hm, xi, random_skew(rng, 7))
    T = np.stack([pi_m(hm, xi, random_skew(rng, 7)) for _ in range(7)])
    first, second = laplacian_terms(xi, divT, T)
    assert (first - diamond(divT, xi)).norm() == 0.0
    direct = diamond(T[0], diamond(T[0], xi))
    for Tk in T[1:]:
        direct = direct + diamond(Tk, diamond(Tk, xi))
    assert (second - direct).norm() < 1e-12
    # the first term is tangent to the orbit: pi_h of divT acts trivially
    assert diamond(pi_h(hm, xi, divT), xi).norm() < 1e-10
