import itertools
import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from hflow.algebra import (
    DenseTensor,
    DimensionError,
    MultiTensor,
    TensorShape,
    alternation,
    alternating_residual,
    bracket,
    diamond,
    diamond_array,
    expm_skew,
    expm_skew_array,
    group_act,
    hodge_star,
    inner,
    levi_civita,
    skew_to_vec,
    so_basis,
    sym_skew_split,
    vec_to_skew,
    wedge,
)
from hflow.models import model


def loop_diamond(A, x, p, q):
    """Coordinate formula with explicit loops over every index tuple."""
    n = A.shape[0]
    k = p + q
    out = np.zeros_like(x)
    for idx in itertools.product(range(n), repeat=k):
        acc = 0.0
        for r in range(k):
            for m in range(n):
                j = list(idx)
                j[r] = m
                if r < p:
                    acc -= A[idx[r], m] * x[tuple(j)]
                else:
                    acc += A[m, idx[r]] * x[tuple(j)]
        out[idx] = acc
    return out


def taylor_expm(A, terms=40):
    """Plain scaling-and-squaring Taylor series, independent of the library."""
    s = max(0, int(np.ceil(np.log2(max(np.linalg.norm(A, 1), 1e-300)))) + 1)
    B = A / 2 ** s
    out = np.eye(len(A))
    term = np.eye(len(A))
    for k in range(1, terms):
        term = term @ B / k
        out = out + term
    for _ in range(s):
        out = out @ out
    return out


def random_skew(rng, n, scale=1.0):
    C = rng.normal(size=(n, n))
    return scale * (C - C.T)


def random_rotation(rng, n):
    return scipy.linalg.expm(random_skew(rng, n))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# ---------------------------------------------------------------- containers


def test_tensor_shape_and_net_degree():
    s = TensorShape(1, 3, 5)
    assert s.size == 5 ** 4
    assert s.net_degree == 2
    with pytest.raises(DimensionError):
        TensorShape(0, 1, 1)


def test_dense_tensor_rejects_bad_data():
    with pytest.raises(DimensionError):
        DenseTensor(np.zeros((3, 4)), 1, 1)
    with pytest.raises(ValueError):
        DenseTensor(np.array([np.nan, 0.0]), 1, 0)
    with pytest.raises(DimensionError):
        DenseTensor(np.zeros((3, 3)), 1, 1, form=True)


def test_multitensor_requires_common_dimension():
    with pytest.raises(DimensionError):
        MultiTensor([DenseTensor(np.zeros(3), 1, 0), DenseTensor(np.zeros(4), 1, 0)])
    with pytest.raises(DimensionError):
        MultiTensor([])


# ---------------------------------------------------------------- diamond


@pytest.mark.parametrize("p,q", [(1, 0), (0, 1), (1, 1), (0, 2), (2, 1), (0, 3)])
def test_diamond_matches_loop_oracle(rng, p, q):
    n = 3
    A = rng.normal(size=(n, n))
    x = rng.normal(size=(n,) * (p + q))
    assert np.allclose(diamond_array(A, x, p, q), loop_diamond(A, x, p, q), atol=1e-13)


def test_diamond_identity_on_phi_is_three_phi():
    phi = model("g2").xi0
    out = diamond(np.eye(7), phi)
    assert np.array_equal(out[0].data, 3 * phi[0].data)


def test_diamond_zero(rng):
    xi = DenseTensor(rng.normal(size=(4, 4, 4)), 1, 2)
    assert diamond(np.zeros((4, 4)), xi).max_abs() == 0.0


def test_diamond_on_volume_form_is_trace(rng):
    A = rng.normal(size=(4, 4))
    vol = levi_civita(4)
    assert np.allclose(diamond_array(A, vol, 0, 4), np.trace(A) * vol, atol=1e-13)


def test_diamond_on_endomorphism_is_minus_commutator(rng):
    A, B = rng.normal(size=(2, 5, 5))
    out = diamond(A, DenseTensor(B, 1, 1))[0].data
    assert np.allclose(out, -(A @ B - B @ A), atol=1e-13)


def test_diamond_on_metric_is_twice_symmetric_part(rng):
    A = rng.normal(size=(6, 6))
    S, _ = sym_skew_split(A)
    assert np.allclose(diamond_array(A, np.eye(6), 0, 2), 2 * S, atol=1e-14)


def test_diamond_rejects_dimension_mismatch():
    with pytest.raises(DimensionError):
        diamond(np.eye(3), DenseTensor(np.zeros(4), 1, 0))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 31), n=st.sampled_from([4, 7]), p=st.integers(0, 2), q=st.integers(0, 2))
def test_diamond_is_a_lie_algebra_action(seed, n, p, q):
    if p + q == 0:
        q = 1
    rng = np.random.default_rng(seed)
    A, B = rng.normal(size=(2, n, n))
    x = rng.normal(size=(n,) * (p + q))
    lhs = diamond_array(A, diamond_array(B, x, p, q), p, q) - diamond_array(B, diamond_array(A, x, p, q), p, q)
    rhs = diamond_array(-bracket(A, B), x, p, q)
    assert np.max(np.abs(lhs - rhs)) < 1e-10 * (1 + np.max(np.abs(x)))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 31), a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_diamond_is_bilinear(seed, a, b):
    rng = np.random.default_rng(seed)
    A, B = rng.normal(size=(2, 4, 4))
    x, y = rng.normal(size=(2, 4, 4, 4))
    lin_a = diamond_array(a * A + b * B, x, 1, 2) - a * diamond_array(A, x, 1, 2) - b * diamond_array(B, x, 1, 2)
    lin_x = diamond_array(A, a * x + b * y, 1, 2) - a * diamond_array(A, x, 1, 2) - b * diamond_array(A, y, 1, 2)
    assert np.max(np.abs(lin_a)) < 1e-11 and np.max(np.abs(lin_x)) < 1e-11


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 31), k=st.integers(1, 4))
def test_diamond_preserves_antisymmetry(seed, k):
    rng = np.random.default_rng(seed)
    form = alternation(rng.normal(size=(5,) * k))
    A = rng.normal(size=(5, 5))
    assert alternating_residual(diamond_array(A, form, 0, k)) < 1e-12


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 31), p=st.integers(0, 2), q=st.integers(0, 2))
def test_skew_diamond_is_antisymmetric_operator(seed, p, q):
    if p + q == 0:
        p = 1
    rng = np.random.default_rng(seed)
    n = 4
    C, D = random_skew(rng, n), random_skew(rng, n)
    A = rng.normal(size=(n, n))
    x = rng.normal(size=(n,) * (p + q))
    cx = diamond_array(C, x, p, q)
    assert abs(np.vdot(cx, x)) < 1e-10 * np.vdot(x, x) * np.abs(C).max()
    ax = diamond_array(A, x, p, q)
    lhs = np.vdot(ax, diamond_array(D, x, p, q))
    rhs = -np.vdot(diamond_array(D, ax, p, q), x)
    assert abs(lhs - rhs) < 1e-10 * (1 + abs(lhs))


# ---------------------------------------------------------------- group action


def test_group_act_identity(rng):
    xi = MultiTensor([DenseTensor(rng.normal(size=(4, 4)), 1, 1), DenseTensor(rng.normal(size=(4,) * 3), 0, 3)])
    out = group_act(np.eye(4), xi)
    assert all(np.array_equal(a.data, b.data) for a, b in zip(out, xi))


def test_group_act_is_a_right_action(rng):
    g, h = random_rotation(rng, 5), random_rotation(rng, 5)
    xi = DenseTensor(rng.normal(size=(5, 5, 5)), 1, 2)
    lhs = group_act(h, group_act(g, xi))
    rhs = group_act(g @ h, xi)
    assert (lhs - rhs).max_abs() < 1e-12


def test_group_act_derivative_is_diamond(rng):
    n = 4
    A = random_skew(rng, n)
    xi = DenseTensor(rng.normal(size=(n, n, n)), 1, 2)
    exact = diamond(A, xi)

    def err(t):
        fd = (group_act(expm_skew(A, t), xi) - group_act(expm_skew(A, -t), xi)) * (0.5 / t)
        return (fd - exact).max_abs()

    # central differences: the error drops by 4 per halving of t
    e1, e2 = err(1e-2), err(5e-3)
    assert e1 < 1e-1 and 3.8 < e1 / e2 < 4.2


def test_group_act_rejects_singular(rng):
    g = np.eye(3)
    g[2] = g[1]
    with pytest.raises(np.linalg.LinAlgError, match="condition"):
        group_act(g, DenseTensor(np.ones(3), 1, 0))


def test_g2_stabiliser_fixes_phi():
    hm = model("g2")
    phi = hm.xi0
    # kernel of A -> A . phi on so(7), from an SVD of the coordinate matrix
    basis = [E for _, E in so_basis(7)]
    L = np.stack([diamond(E, phi)[0].data.ravel() for E in basis], axis=1)
    _, s, vt = np.linalg.svd(L)
    kernel = vt[np.sum(s > 1e-8 * s[0]):]
    assert len(kernel) == 14
    A = sum(c * E for c, E in zip(kernel[3], basis))
    assert (group_act(expm_skew(A, 1.0), phi) - phi).max_abs() < 1e-12


# ---------------------------------------------------------------- inner, split, exp


def test_inner_values_for_model_tensors():
    assert inner(model("g2").xi0, model("g2").xi0) == pytest.approx(7.0, abs=1e-14)
    assert inner(model("u3").xi0, model("u3").xi0) == pytest.approx(6.0, abs=1e-14)
    su2 = model("su2").xi0
    assert inner(su2[1], su2[1]) + inner(su2[2], su2[2]) == pytest.approx(4.0, abs=1e-14)


def test_inner_rejects_shape_mismatch():
    with pytest.raises(DimensionError):
        inner(DenseTensor(np.ones(3), 1, 0), DenseTensor(np.ones(3), 0, 1))


def test_sym_skew_split(rng):
    S, C = sym_skew_split(np.eye(4))
    assert np.array_equal(S, np.eye(4)) and not C.any()
    J = model("u2").xi0[0].data
    S, C = sym_skew_split(J)
    assert not S.any() and np.array_equal(C, J)
    A = rng.normal(size=(6, 6))
    S, C = sym_skew_split(A)
    assert np.array_equal(S, S.T) and np.array_equal(C, -C.T)
    assert np.max(np.abs(S + C - A)) <= 4 * np.finfo(float).eps * np.abs(A).max()


def test_expm_skew_closed_forms():
    assert np.array_equal(expm_skew(np.zeros((3, 3)), 2.0), np.eye(3))
    th, t = 0.7, 1.9
    C = np.array([[0.0, -th], [th, 0.0]])
    R = expm_skew(C, t)
    c, s = math.cos(th * t), math.sin(th * t)
    assert np.allclose(R, [[c, -s], [s, c]], atol=1e-15)


def test_expm_skew_matches_taylor_oracle(rng):
    C = random_skew(rng, 7)
    R = expm_skew(C, 1.0)
    assert np.max(np.abs(R - taylor_expm(C))) < 1e-12
    assert np.max(np.abs(R.T @ R - np.eye(7))) < 1e-12
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)


def test_expm_skew_rejects_non_skew(rng):
    with pytest.raises(ValueError, match="skew"):
        expm_skew(rng.normal(size=(3, 3)))


@pytest.mark.parametrize("scale", [1e-4, 0.1, 1.0, 3.0])
def test_batched_expm_matches_scipy(rng, scale):
    C = np.stack([random_skew(rng, 5, scale) for _ in range(6)], axis=-1)
    out = expm_skew_array(C, 0.8)
    for b in range(6):
        assert np.max(np.abs(out[..., b] - scipy.linalg.expm(0.8 * C[..., b]))) < 1e-13 * max(1, scale * 10)


# ---------------------------------------------------------------- exterior algebra


def test_so_basis_normalisation():
    for (a, b), E in so_basis(5):
        assert a < b
        assert -np.trace(E @ E) == 2.0


def test_skew_vector_round_trip(rng):
    C = random_skew(rng, 6)
    assert np.array_equal(vec_to_skew(skew_to_vec(C), 6), C)


def test_hodge_star_of_volume_and_wedge():
    n = 4
    e = np.eye(n)
    one = np.array(1.0)
    assert hodge_star(levi_civita(n)) == pytest.approx(1.0)
    w = wedge(wedge(e[0], e[1]), wedge(e[2], e[3]))
    assert np.array_equal(w, levi_civita(n))
    assert np.allclose(hodge_star(wedge(e[0], e[1])), wedge(e[2], e[3]))
    assert one.ndim == 0


@pytest.mark.parametrize("k,l,n", [(1, 1, 3), (1, 2, 4), (2, 2, 5), (3, 1, 4), (0, 2, 3)])
def test_wedge_matches_full_alternation(k, l, n, rng):
    a = alternation(rng.normal(size=(n,) * k)) if k else np.array(rng.normal())
    b = alternation(rng.normal(size=(n,) * l))
    coef = math.factorial(k + l) / (math.factorial(k) * math.factorial(l))
    assert np.allclose(wedge(a, b), coef * alternation(np.multiply.outer(a, b)), atol=1e-13)
