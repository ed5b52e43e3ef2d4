"""Dense small-tensor algebra over R^n and the infinitesimal GL(n) action.

Tensors are stored as numpy arrays of shape ``(n,) * (p + q)`` with the
contravariant indices first.  The batched helpers (``*_array``) take extra
batch axes *after* the tensor axes, so that a whole grid of points is one
array in component-major layout.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np
import scipy.linalg


class DimensionError(ValueError):
    """Raised when tensor shapes or dimensions do not match."""


@dataclass(frozen=True)
class TensorShape:
    p: int
    q: int
    n: int

    def __post_init__(self):
        if self.n < 2 or self.p < 0 or self.q < 0:
            raise DimensionError(f"invalid tensor shape {self}")

    @property
    def size(self) -> int:
        return self.n ** (self.p + self.q)

    @property
    def net_degree(self) -> int:
        return self.q - self.p


class DenseTensor:
    """A (p, q)-tensor over R^n.

    ``form=True`` marks a fully antisymmetric covariant tensor that is
    measured with the exterior-form norm (sum over increasing index tuples),
    i.e. the full componentwise sum divided by ``q!``.
    """

    __slots__ = ("data", "p", "q", "form")

    def __init__(self, data, p: int, q: int, form: bool = False):
        data = np.asarray(data, dtype=float)
        k = p + q
        if data.ndim != k or (k and len(set(data.shape)) != 1):
            raise DimensionError(f"data of shape {data.shape} is not a ({p},{q})-tensor")
        if not np.all(np.isfinite(data)):
            raise ValueError("tensor entries must be finite")
        if form and p != 0:
            raise DimensionError("forms are covariant")
        self.data = data
        self.p = p
        self.q = q
        self.form = form

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> TensorShape:
        return TensorShape(self.p, self.q, self.n)

    @property
    def weight(self) -> float:
        """Factor turning the componentwise sum of squares into the norm."""
        return 1.0 / math.factorial(self.q) if self.form else 1.0

    def like(self, data) -> "DenseTensor":
        return DenseTensor(data, self.p, self.q, self.form)

    def __repr__(self):
        tag = " form" if self.form else ""
        return f"DenseTensor(({self.p},{self.q}), n={self.n}{tag})"


class MultiTensor:
    """An ordered tuple of tensors sharing one ambient dimension."""

    __slots__ = ("parts",)

    def __init__(self, parts: Iterable[DenseTensor]):
        parts = tuple(parts)
        if not parts:
            raise DimensionError("a multi-tensor needs at least one part")
        if len({t.n for t in parts}) != 1:
            raise DimensionError("all parts must share n")
        self.parts = parts

    @property
    def n(self) -> int:
        return self.parts[0].n

    def __iter__(self) -> Iterator[DenseTensor]:
        return iter(self.parts)

    def __len__(self):
        return len(self.parts)

    def __getitem__(self, i) -> DenseTensor:
        return self.parts[i]

    def map(self, fn) -> "MultiTensor":
        return MultiTensor(t.like(fn(t)) for t in self.parts)

    def __add__(self, other: "MultiTensor") -> "MultiTensor":
        _check_same(self, other)
        return MultiTensor(a.like(a.data + b.data) for a, b in zip(self, other))

    def __sub__(self, other: "MultiTensor") -> "MultiTensor":
        _check_same(self, other)
        return MultiTensor(a.like(a.data - b.data) for a, b in zip(self, other))

    def __mul__(self, s: float) -> "MultiTensor":
        return MultiTensor(a.like(s * a.data) for a in self)

    __rmul__ = __mul__

    def norm(self) -> float:
        return math.sqrt(max(inner(self, self), 0.0))

    def max_abs(self) -> float:
        return max(float(np.max(np.abs(t.data))) for t in self)

    def __repr__(self):
        return f"MultiTensor({list(self.parts)})"


def as_multi(xi) -> MultiTensor:
    if isinstance(xi, MultiTensor):
        return xi
    if isinstance(xi, DenseTensor):
        return MultiTensor([xi])
    return MultiTensor(xi)


def _check_same(a: MultiTensor, b: MultiTensor):
    if len(a) != len(b) or any(
        (x.p, x.q, x.n) != (y.p, y.q, y.n) for x, y in zip(a, b)
    ):
        raise DimensionError("multi-tensor shapes differ")


# ---------------------------------------------------------------- slot algebra


_LETTERS = "abcdefghijklmnop"


def _slot_apply(x: np.ndarray, k: int, slot: int, M: np.ndarray) -> np.ndarray:
    """y[.., j, ..] = sum_m x[.., m, ..] M[m, j] on tensor slot ``slot``.

    Batch axes trail the k tensor axes; ``M`` is ``(n, n)`` or ``(n, n) + batch``.
    """
    if M.ndim == 2:
        return np.moveaxis(np.tensordot(x, M, axes=([slot], [0])), -1, slot)
    idx = _LETTERS[:k]
    src = idx[:slot] + "z" + idx[slot + 1:]
    return np.einsum(f"{src}...,z{idx[slot]}...->{idx}...", x, M)


def diamond_array(A: np.ndarray, x: np.ndarray, p: int, q: int) -> np.ndarray:
    """Batched diamond action on one tensor part.

    ``x`` has shape ``(n,) * (p + q) + batch`` and ``A`` is ``(n, n)`` or
    ``(n, n) + batch``.
    """
    k = p + q
    out = None
    At = np.swapaxes(A, 0, 1)
    for r in range(k):
        term = _slot_apply(x, k, r, A if r >= p else At)
        if r < p:
            term = -term
        out = term if out is None else out + term
    return out


def diamond(A, xi) -> MultiTensor:
    """Infinitesimal GL(n) action of the endomorphism A on every part of xi."""
    A = np.asarray(A, dtype=float)
    xi = as_multi(xi)
    if A.shape != (xi.n, xi.n):
        raise DimensionError(f"endomorphism of shape {A.shape} does not act on R^{xi.n}")
    return MultiTensor(t.like(diamond_array(A, t.data, t.p, t.q)) for t in xi)


def group_act_array(g: np.ndarray, ginv: np.ndarray, x: np.ndarray, p: int, q: int) -> np.ndarray:
    """Batched right action: g^{-1} on upper indices, pullback by g on lower ones."""
    k = p + q
    y = x
    ginv_t = np.swapaxes(ginv, 0, 1)
    for r in range(k):
        y = _slot_apply(y, k, r, g if r >= p else ginv_t)
    return y


def group_act(g, xi, max_cond: float = 1e12) -> MultiTensor:
    """Right action of an invertible matrix on a multi-tensor.

    Applying ``group_act(h, group_act(g, xi))`` equals ``group_act(g @ h, xi)``.
    """
    g = np.asarray(g, dtype=float)
    xi = as_multi(xi)
    if g.shape != (xi.n, xi.n):
        raise DimensionError(f"matrix of shape {g.shape} does not act on R^{xi.n}")
    cond = np.linalg.cond(g)
    if not np.isfinite(cond) or cond > max_cond:
        raise np.linalg.LinAlgError(f"matrix is singular to working precision (condition number {cond:.3e})")
    ginv = np.linalg.inv(g)
    return MultiTensor(t.like(group_act_array(g, ginv, t.data, t.p, t.q)) for t in xi)


def inner(xi, eta) -> float:
    """Induced flat-metric inner product of two multi-tensors."""
    xi, eta = as_multi(xi), as_multi(eta)
    _check_same(xi, eta)
    return float(sum(a.weight * np.vdot(a.data, b.data) for a, b in zip(xi, eta)))


# ------------------------------------------------------------- endomorphisms


def sym_skew_split(A) -> tuple[np.ndarray, np.ndarray]:
    A = np.asarray(A, dtype=float)
    S = 0.5 * (A + A.T)
    C = 0.5 * (A - A.T)
    return S, C


def bracket(A, B) -> np.ndarray:
    return A @ B - B @ A


def endo_inner(A, B) -> float:
    """<A, B> = -tr(AB) on skew matrices, i.e. the Frobenius pairing."""
    return float(np.sum(np.asarray(A) * np.asarray(B)))


def skew_residual(C) -> float:
    C = np.asarray(C)
    return float(np.max(np.abs(C + np.swapaxes(C, -1, -2)), initial=0.0))


def expm_skew(C, t: float = 1.0, tol: float = 1e-12) -> np.ndarray:
    """exp(tC) for a skew matrix (or a stack of them)."""
    C = np.asarray(C, dtype=float)
    scale = max(1.0, float(np.max(np.abs(C), initial=0.0)))
    if skew_residual(C) > tol * scale:
        raise ValueError("expm_skew needs a skew-symmetric matrix")
    return scipy.linalg.expm(t * C)


def expm_skew_array(C: np.ndarray, t: float = 1.0) -> np.ndarray:
    """exp(tC) for a component-major stack ``(n, n) + batch`` of matrices.

    Scaling and squaring around a Taylor series; the number of squarings and
    of series terms is chosen from the largest 1-norm in the stack, so every
    point in a batch sees the same arithmetic.
    """
    A = t * np.asarray(C, dtype=float)
    n = A.shape[0]
    norm = float(np.max(np.sum(np.abs(A), axis=0), initial=0.0))
    s = max(0, math.ceil(math.log2(norm / 0.25))) if norm > 0.25 else 0
    if s:
        A = A / 2.0 ** s
    a = norm / 2.0 ** s
    # series length from the tail bound a^k / k! below half an ulp
    nterms, bound = 1, a
    while bound > 2.0 ** -54 and nterms < 30:
        nterms += 1
        bound *= a / nterms
    eye = np.eye(n).reshape((n, n) + (1,) * (A.ndim - 2))
    out = eye + A
    term = A
    for k in range(2, nterms + 1):
        term = np.einsum("ij...,jk...->ik...", term, A) / k
        out += term
    for _ in range(s):
        out = np.einsum("ij...,jk...->ik...", out, out)
    return out


def so_basis(n: int) -> list[tuple[tuple[int, int], np.ndarray]]:
    """Basis E_ab (a < b) of so(n) with (E_ab)_ij = d_ai d_bj - d_bi d_aj."""
    out = []
    for a, b in itertools.combinations(range(n), 2):
        E = np.zeros((n, n))
        E[a, b] = 1.0
        E[b, a] = -1.0
        out.append(((a, b), E))
    return out


def skew_to_vec(C: np.ndarray) -> np.ndarray:
    """Coordinates of a skew matrix in the basis E_ab, a < b."""
    n = C.shape[-1]
    iu = np.triu_indices(n, 1)
    return C[..., iu[0], iu[1]]


def vec_to_skew(v: np.ndarray, n: int) -> np.ndarray:
    iu = np.triu_indices(n, 1)
    C = np.zeros(v.shape[:-1] + (n, n))
    C[..., iu[0], iu[1]] = v
    C[..., iu[1], iu[0]] = -v
    return C


# --------------------------------------------------------- exterior algebra


def perm_sign(perm: Sequence[int]) -> int:
    perm = list(perm)
    sign = 1
    for i in range(len(perm)):
        while perm[i] != i:
            j = perm[i]
            perm[i], perm[j] = perm[j], perm[i]
            sign = -sign
    return sign


def levi_civita(n: int) -> np.ndarray:
    eps = np.zeros((n,) * n)
    for perm in itertools.permutations(range(n)):
        eps[perm] = perm_sign(perm)
    return eps


def form_from_terms(n: int, terms: Iterable[tuple[float, Sequence[int]]]) -> np.ndarray:
    """Dense alternating array from a list of (coefficient, index tuple) terms.

    Index tuples are 0-based; ``(1.0, (0, 1, 2))`` is e^0 ^ e^1 ^ e^2.
    """
    terms = list(terms)
    k = len(terms[0][1])
    out = np.zeros((n,) * k)
    for coef, idx in terms:
        for perm in itertools.permutations(range(k)):
            out[tuple(idx[i] for i in perm)] += perm_sign(perm) * coef
    return out


def alternation(x: np.ndarray) -> np.ndarray:
    """Projection of a covariant tensor onto its alternating part."""
    k = x.ndim
    out = np.zeros_like(x)
    for perm in itertools.permutations(range(k)):
        out += perm_sign(perm) * np.transpose(x, perm)
    return out / math.factorial(k)


def wedge(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Wedge product of two dense alternating arrays (form convention).

    Equal to (k+l)!/(k! l!) Alt(a x b); summed over the (k, l)-shuffles
    only, which is valid because both factors are already alternating.
    """
    k, l = a.ndim, b.ndim
    letters = _LETTERS[:k + l]
    n = (a.shape + b.shape + (0,))[0]
    out = np.zeros((n,) * (k + l), dtype=np.result_type(a, b))
    for S in itertools.combinations(range(k + l), k):
        rest = [i for i in range(k + l) if i not in S]
        sa = "".join(letters[i] for i in S)
        sb = "".join(letters[i] for i in rest)
        out += perm_sign(list(S) + rest) * np.einsum(f"{sa},{sb}->{letters}", a, b)
    return out


def hodge_star(a: np.ndarray) -> np.ndarray:
    """Hodge star of a dense alternating k-array in R^n, standard orientation."""
    n = a.shape[0] if a.ndim else None
    k = a.ndim
    eps = levi_civita(n)
    out = np.tensordot(a, eps, axes=(list(range(k)), list(range(k))))
    return out / math.factorial(k)


def interior(X: np.ndarray, a: np.ndarray) -> np.ndarray:
    """X inserted into the first slot of a covariant array."""
    return np.tensordot(X, a, axes=(0, 0))


def alternating_residual(x: np.ndarray) -> float:
    return float(np.max(np.abs(x - alternation(x)), initial=0.0))


def increasing_tuples(n: int, k: int) -> list[tuple[int, ...]]:
    return list(itertools.combinations(range(n), k))
