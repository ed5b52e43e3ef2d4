"""Model tensors for the supported structure groups H in SO(n)."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .algebra import (
    DenseTensor,
    MultiTensor,
    diamond,
    form_from_terms,
    hodge_star,
    inner,
    levi_civita,
    wedge,
)

KIND_TAGS = {"trivial": 0, "u": 1, "su": 2, "g2": 3, "spin7": 4}


@dataclass(frozen=True)
class HKind:
    """Structure group tag.  ``m`` is n for the trivial group and the
    complex dimension for U(m) and SU(m)."""

    tag: str
    m: int = 0

    def __post_init__(self):
        if self.tag not in KIND_TAGS:
            raise ValueError(f"unknown structure group {self.tag!r}")
        if self.tag in ("u", "su") and self.m < 2:
            raise ValueError(f"{self.tag.upper()}(m) needs m >= 2, got {self.m}")
        if self.tag == "trivial" and self.m < 2:
            raise ValueError("the trivial structure needs n >= 2")

    @property
    def n(self) -> int:
        if self.tag == "g2":
            return 7
        if self.tag == "spin7":
            return 8
        if self.tag == "trivial":
            return self.m
        return 2 * self.m

    @property
    def code(self) -> int:
        return KIND_TAGS[self.tag]

    @classmethod
    def parse(cls, text: str) -> "HKind":
        """Parse names such as ``g2``, ``spin7``, ``u2``, ``SU(3)``, ``trivial5``."""
        s = re.sub(r"[\s()_\-]", "", str(text).lower())
        if s in ("g2",):
            return cls("g2")
        if s in ("spin7",):
            return cls("spin7")
        mt = re.fullmatch(r"(trivial|su|u)(\d+)", s)
        if not mt:
            raise ValueError(f"cannot parse structure group {text!r}")
        return cls(mt.group(1), int(mt.group(2)))

    @classmethod
    def from_code(cls, code: int, n: int) -> "HKind":
        tag = {v: k for k, v in KIND_TAGS.items()}.get(code)
        if tag is None:
            raise ValueError(f"unknown kind tag {code}")
        if tag in ("u", "su"):
            return cls(tag, n // 2)
        if tag == "trivial":
            return cls(tag, n)
        return cls(tag)

    def __str__(self):
        return {
            "trivial": f"Trivial({self.m})",
            "u": f"U({self.m})",
            "su": f"SU({self.m})",
            "g2": "G2",
            "spin7": "Spin7",
        }[self.tag]


@dataclass(frozen=True, eq=False)
class HModel:
    kind: HKind
    n: int
    xi0: MultiTensor
    c: float | tuple[float, float]
    dim_h: int
    dim_m: int
    extras: dict = field(default_factory=dict)

    @property
    def single_c(self) -> bool:
        return not isinstance(self.c, tuple)

    @property
    def c_min(self) -> float:
        return min(self.c) if isinstance(self.c, tuple) else self.c

    @property
    def c_max(self) -> float:
        return max(self.c) if isinstance(self.c, tuple) else self.c


def _t(s: str) -> tuple[int, ...]:
    return tuple(int(ch) - 1 for ch in s)


_PHI_TERMS = [
    (1, "123"), (1, "145"), (-1, "167"), (1, "246"),
    (-1, "275"), (1, "347"), (-1, "356"),
]
_PSI_TERMS = [
    (1, "4567"), (-1, "4523"), (-1, "4163"), (-1, "4127"),
    (-1, "2637"), (-1, "1537"), (-1, "1526"),
]


@lru_cache(maxsize=None)
def _phi0() -> np.ndarray:
    a = form_from_terms(7, [(c, _t(s)) for c, s in _PHI_TERMS])
    a.setflags(write=False)
    return a


@lru_cache(maxsize=None)
def _psi0() -> np.ndarray:
    a = form_from_terms(7, [(c, _t(s)) for c, s in _PSI_TERMS])
    a.setflags(write=False)
    return a


def g2_form() -> DenseTensor:
    return DenseTensor(_phi0().copy(), 0, 3, form=True)


def hodge_dual_g2() -> DenseTensor:
    """The coassociative 4-form dual to the standard G2 3-form."""
    return DenseTensor(_psi0().copy(), 0, 4, form=True)


def spin7_form() -> DenseTensor:
    """e^0 ^ phi + *phi on R^8, with index 0 the extra direction."""
    phi8 = np.zeros((8,) * 3)
    phi8[1:, 1:, 1:] = _phi0()
    psi8 = np.zeros((8,) * 4)
    psi8[1:, 1:, 1:, 1:] = _psi0()
    e0 = np.zeros(8)
    e0[0] = 1.0
    return DenseTensor(wedge(e0, phi8) + psi8, 0, 4, form=True)


def complex_structure(m: int) -> np.ndarray:
    """J0 = [[0, -I], [I, 0]] in coordinates (x^1..x^m, y^1..y^m)."""
    J = np.zeros((2 * m, 2 * m))
    J[m:, :m] = np.eye(m)
    J[:m, m:] = -np.eye(m)
    return J


def holomorphic_volume(m: int) -> np.ndarray:
    """dz^1 ^ ... ^ dz^m as a complex dense alternating array."""
    n = 2 * m
    out = None
    for p in range(m):
        dz = np.zeros(n, dtype=complex)
        dz[p] = 1.0
        dz[m + p] = 1.0j
        out = dz if out is None else wedge(out, dz)
    return out


def model(kind: HKind | str) -> HModel:
    if isinstance(kind, str):
        kind = HKind.parse(kind)
    n = kind.n
    so_dim = n * (n - 1) // 2
    if kind.tag == "trivial":
        parts = [DenseTensor(e, 1, 0) for e in np.eye(n)]
        return HModel(kind, n, MultiTensor(parts), 1.0, 0, so_dim)
    if kind.tag == "u":
        m = kind.m
        xi0 = MultiTensor([DenseTensor(complex_structure(m), 1, 1)])
        return HModel(kind, n, xi0, 4.0, m * m, m * m - m)
    if kind.tag == "su":
        m = kind.m
        ups = holomorphic_volume(m)
        xi0 = MultiTensor([
            DenseTensor(complex_structure(m), 1, 1),
            DenseTensor(ups.real, 0, m, form=True),
            DenseTensor(ups.imag, 0, m, form=True),
        ])
        lam = (float(m * 2 ** (m - 1)), float(4 + 2 ** (m - 1)))
        return HModel(kind, n, xi0, lam, m * m - 1, m * m - m + 1)
    if kind.tag == "g2":
        xi0 = MultiTensor([g2_form()])
        return HModel(kind, n, xi0, 6.0, 14, 7, {"psi": hodge_dual_g2()})
    if kind.tag == "spin7":
        xi0 = MultiTensor([spin7_form()])
        return HModel(kind, n, xi0, 16.0, 21, 7)
    raise ValueError(kind)


# ------------------------------------------------------------ identity suite


@dataclass
class ModelReport:
    kind: HKind
    residuals: dict[str, float]

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values(), default=0.0)

    def ok(self, tol: float = 1e-12) -> bool:
        return self.max_residual < tol

    def lines(self) -> list[str]:
        return [f"{self.kind}: {k} = {v:.3e}" for k, v in self.residuals.items()]


def _maxabs(x) -> float:
    return float(np.max(np.abs(x), initial=0.0))


def verify_model(hm: HModel) -> ModelReport:
    """Evaluate the exact algebraic identities of a model tensor."""
    r: dict[str, float] = {}
    n = hm.n
    eye = np.eye(n)
    if hm.kind.tag == "trivial":
        frame = np.array([t.data for t in hm.xi0])
        r["frame orthonormal"] = _maxabs(frame @ frame.T - eye)
    if hm.kind.tag in ("u", "su"):
        m = hm.kind.m
        J = hm.xi0[0].data
        r["J^2 + Id"] = _maxabs(J @ J + eye)
        r["omega antisymmetric"] = _maxabs(J + J.T)
        r["|J|^2 - 2m"] = abs(inner(hm.xi0[0], hm.xi0[0]) - 2 * m)
    if hm.kind.tag == "su":
        m = hm.kind.m
        re_u, im_u = hm.xi0[1], hm.xi0[2]
        r["|Upsilon|^2 - 2^m"] = abs(inner(re_u, re_u) + inner(im_u, im_u) - 2 ** m)
        J = hm.xi0[0].data
        r["J.ReU + m ImU"] = _maxabs(diamond(J, re_u)[0].data + m * im_u.data)
        r["J.ImU - m ReU"] = _maxabs(diamond(J, im_u)[0].data - m * re_u.data)
    if hm.kind.tag == "g2":
        phi = hm.xi0[0].data
        psi = hm.extras["psi"].data
        r["psi psi - 24 g"] = _maxabs(np.einsum("aijk,bijk->ab", psi, psi) - 24 * eye)
        r["phi psi + 4 phi"] = _maxabs(np.einsum("ijk,abjk->iab", phi, psi) + 4 * phi)
        r["phi psi contraction"] = _maxabs(np.einsum("ijk,mijk->m", phi, psi))
        r["<X.phi, X.phi> - 6|X|^2"] = _maxabs(np.einsum("aij,bij->ab", phi, phi) - 6 * eye)
        r["|phi|^2 - 7"] = abs(inner(hm.xi0, hm.xi0) - 7)
        r["psi - *phi"] = _maxabs(psi - hodge_star(phi))
        r["phi^psi - 7 vol"] = _maxabs(wedge(phi, psi) - 7 * levi_civita(7))
    if hm.kind.tag == "spin7":
        Phi = hm.xi0[0].data
        r["*Phi - Phi"] = _maxabs(hodge_star(Phi) - Phi)
        r["|Phi|^2 - 14"] = abs(inner(hm.xi0, hm.xi0) - 14)
    return ModelReport(hm.kind, r)


# ---------------------------------------------------- G2 parametrization


def param_g2_array(f: np.ndarray, X: np.ndarray, phi: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Batched (f^2 - |X|^2) phi - 2 f X.psi + 2 X ^ (X.phi)."""
    f = np.asarray(f, dtype=float)
    X = np.asarray(X, dtype=float)
    x2 = np.einsum("...a,...a->...", X, X)
    Xpsi = np.einsum("...a,aijk->...ijk", X, psi)
    Xphi = np.einsum("...a,aij->...ij", X, phi)
    wedge_part = (
        np.einsum("...i,...jk->...ijk", X, Xphi)
        + np.einsum("...j,...ki->...ijk", X, Xphi)
        + np.einsum("...k,...ij->...ijk", X, Xphi)
    )
    return (
        (f * f - x2)[..., None, None, None] * phi
        - 2 * f[..., None, None, None] * Xpsi
        + 2 * wedge_part
    )


def param_g2(f: float, X, phi: DenseTensor | None = None, psi: DenseTensor | None = None,
             tol: float = 1e-12) -> DenseTensor:
    """G2 3-form attached to a unit vector (f, X) of R^8.

    Every such form induces the flat metric of ``phi``; the pairs (f, X) and
    (-f, -X) give the same form.
    """
    X = np.asarray(X, dtype=float)
    if X.shape != (7,):
        raise ValueError("X must be a vector in R^7")
    if abs(f * f + X @ X - 1.0) > tol:
        raise ValueError(f"(f, X) must be a unit vector, |.|^2 = {f * f + X @ X!r}")
    phi_a = _phi0() if phi is None else phi.data
    psi_a = _psi0() if psi is None else psi.data
    return DenseTensor(param_g2_array(np.asarray(f), X, phi_a, psi_a), 0, 3, form=True)


def su2_pair() -> tuple[np.ndarray, np.ndarray]:
    """Two elements of the J-anti-linear part of so(4) whose bracket is 2 J0."""
    K = np.array([[0.0, 1.0], [-1.0, 0.0]])
    Z = np.zeros((2, 2))
    C2 = np.block([[Z, K], [K, Z]])
    D2 = np.block([[-K, Z], [Z, K]])
    return C2, D2


def volume_form(n: int) -> DenseTensor:
    return DenseTensor(levi_civita(n), 0, n, form=True)


def lambda_pair(m: int) -> tuple[float, float]:
    return float(m * 2 ** (m - 1)), float(4 + 2 ** (m - 1))


__all__ = [
    "HKind", "HModel", "ModelReport", "model", "verify_model", "hodge_dual_g2",
    "param_g2", "param_g2_array", "g2_form", "spin7_form", "complex_structure",
    "holomorphic_volume", "su2_pair", "volume_form", "lambda_pair",
]
