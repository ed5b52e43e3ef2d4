"""Pointwise torsion algebra.

With L = (. diamond xi) restricted to so(n), everything here is built from the
adjoint L^*.  For groups whose complement m is irreducible, L^*L = c on m;
for SU(m) the two irreducible summands carry different constants and the
inverse is assembled blockwise.

All ``*_array`` functions use the component-major layout of
:mod:`hflow.algebra`: tensor axes first, then any number of batch axes.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .algebra import (
    _LETTERS,
    DenseTensor,
    DimensionError,
    MultiTensor,
    as_multi,
    diamond,
    diamond_array,
    skew_residual,
)
from .models import HModel

# (p, q, weight) for each part of a multi-tensor
PartSpec = tuple[int, int, float]


def part_specs(xi: MultiTensor) -> list[PartSpec]:
    return [(t.p, t.q, t.weight) for t in xi]


def moment_array(xs: Sequence[np.ndarray], ws: Sequence[np.ndarray], specs: Sequence[PartSpec]) -> np.ndarray:
    """Matrix K with inner(w, A diamond x) = sum_ij A_ij K_ij for every A."""
    K = None
    for x, w, (p, q, wt) in zip(xs, ws, specs):
        k = p + q
        idx = _LETTERS[:k]
        for r in range(k):
            sx = idx[:r] + "y" + idx[r + 1:]
            sw = idx[:r] + "z" + idx[r + 1:]
            if r >= p:
                term = np.einsum(f"{sx}...,{sw}...->yz...", x, w)
            else:
                term = -np.einsum(f"{sw}...,{sx}...->zy...", w, x)
            term = wt * term if wt != 1.0 else term
            K = term if K is None else K + term
    return K


def adjoint_array(xs, ws, specs) -> np.ndarray:
    K = moment_array(xs, ws, specs)
    return 0.5 * (K - np.swapaxes(K, 0, 1))


def diamond_adjoint(xi, w) -> np.ndarray:
    """Skew W with <W, B> = inner(w, B diamond xi) for every skew B."""
    xi, w = as_multi(xi), as_multi(w)
    if len(xi) != len(w) or any((a.p, a.q, a.n) != (b.p, b.q, b.n) for a, b in zip(xi, w)):
        raise DimensionError("w must have the shape of xi")
    return adjoint_array([t.data for t in xi], [t.data for t in w], part_specs(xi))


def _frob(A, B):
    return np.einsum("ij...,ij...->...", A, B)


def _matmul(A, B):
    return np.einsum("ij...,jk...->ik...", A, B)


def invert_on_m(hm: HModel, xs: Sequence[np.ndarray], W: np.ndarray) -> np.ndarray:
    """Apply the inverse of L^*L on m to an element W = L^*(w) of m."""
    if hm.single_c:
        return W / hm.c
    lam1, lam2 = hm.c
    J = xs[0]
    jj = _frob(J, J)
    p1 = (_frob(W, J) / jj) * J
    p2 = 0.5 * (W + _matmul(_matmul(J, W), J))
    return p1 / lam1 + p2 / lam2


def pi_m_array(hm: HModel, xs: Sequence[np.ndarray], W: np.ndarray, specs=None) -> np.ndarray:
    specs = specs if specs is not None else [(t.p, t.q, t.weight) for t in hm.xi0]
    images = [diamond_array(W, x, p, q) for x, (p, q, _) in zip(xs, specs)]
    return invert_on_m(hm, xs, adjoint_array(xs, images, specs))


def pi_m(hm: HModel, xi, W, tol: float = 1e-12) -> np.ndarray:
    """Orthogonal projection of a skew matrix onto m at the point xi."""
    W = np.asarray(W, dtype=float)
    if skew_residual(W) > tol * max(1.0, float(np.max(np.abs(W), initial=0.0))):
        raise ValueError("pi_m needs a skew-symmetric matrix")
    xi = as_multi(xi)
    return pi_m_array(hm, [t.data for t in xi], W, part_specs(xi))


def pi_h(hm: HModel, xi, W) -> np.ndarray:
    return np.asarray(W, dtype=float) - pi_m(hm, xi, W)


@dataclass
class TorsionValue:
    """Skew matrices T[l], one per direction, and the fit residual."""

    T: np.ndarray
    residual: float

    @property
    def norm2(self) -> float:
        return float(np.sum(self.T ** 2))

    def __getitem__(self, l):
        return self.T[l]


def torsion_array(hm: HModel, xs, grads, specs=None) -> np.ndarray:
    """T with shape ``(n_dirs, n, n) + batch`` from per-direction gradients.

    ``grads[l][i]`` is the derivative of part i along direction l.
    """
    specs = specs if specs is not None else [(t.p, t.q, t.weight) for t in hm.xi0]
    return np.stack([invert_on_m(hm, xs, adjoint_array(xs, g, specs)) for g in grads])


def torsion_from_gradient(hm: HModel, xi, grad) -> TorsionValue:
    """Intrinsic torsion from the covariant derivatives grad[l] of xi."""
    xi = as_multi(xi)
    grad = [as_multi(g) for g in grad]
    xs = [t.data for t in xi]
    specs = part_specs(xi)
    T = torsion_array(hm, xs, [[t.data for t in g] for g in grad], specs)
    res = 0.0
    for l, g in enumerate(grad):
        fit = diamond(T[l], xi) - g
        res = max(res, fit.norm())
    return TorsionValue(T, res)


def g2_full_torsion(phi, psi, grad_phi) -> np.ndarray:
    """Full torsion endomorphism from the derivatives of a G2 3-form.

    ``grad_phi`` is a sequence of seven (0,3)-tensors or an array whose first
    axis is the direction of differentiation.
    """
    phi_a = phi.data if isinstance(phi, DenseTensor) else np.asarray(phi)
    psi_a = psi.data if isinstance(psi, DenseTensor) else np.asarray(psi)
    if isinstance(grad_phi, np.ndarray):
        g = grad_phi
    else:
        g = np.stack([t.data if isinstance(t, DenseTensor) else np.asarray(t) for t in grad_phi])
    if phi_a.shape != (7,) * 3 or psi_a.shape != (7,) * 4 or g.shape[:4] != (7,) * 4:
        raise DimensionError("g2_full_torsion needs a 3-form, a 4-form and seven 3-form derivatives on R^7")
    return np.einsum("pijk...,qijk->pq...", g, psi_a) / 24.0


def g2_torsion_from_full(full: np.ndarray, phi) -> np.ndarray:
    """Torsion endomorphisms from the full torsion of a G2 3-form.

    The 2-form T_{l;ij} = -(1/3) full[l, m] phi[m, i, j] is read as
    g(T_l e_i, e_j), so the returned matrix entry [l, i, j] is T_{l;ji}.
    """
    phi_a = phi.data if isinstance(phi, DenseTensor) else np.asarray(phi)
    return -np.einsum("lm...,mji->lij...", full, phi_a) / 3.0


def laplacian_terms(xi, divT, T) -> tuple[MultiTensor, MultiTensor]:
    """(divT diamond xi, sum_k T_k diamond (T_k diamond xi))."""
    xi = as_multi(xi)
    Tm = T.T if isinstance(T, TorsionValue) else np.asarray(T)
    first = diamond(divT, xi)
    second = None
    for Tk in Tm:
        term = diamond(Tk, diamond(Tk, xi))
        second = term if second is None else second + term
    return first, second


def laplacian_decomposition_residual(hm: HModel, xi, divT, T, lap_xi) -> float:
    first, second = laplacian_terms(xi, divT, T)
    return (as_multi(lap_xi) - first - second).norm()
