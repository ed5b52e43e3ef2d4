"""Harmonic flow of H-structures on flat tori, and its diagnostics.

The flow moves each point by the isometry exp(dt C) with C the divergence of
the torsion, so every step keeps the field on the SO(n)-orbit of the model
tensor.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .algebra import diamond_array, expm_skew_array, group_act_array
from .fields import (
    PeriodicGrid,
    StructureField,
    apply_pointwise,
    grid_diff,
    integrate,
    partial_derivative,
    read_checkpoint,
    second_diff,
    skew_pack,
    skew_unpack,
    write_checkpoint,
)
from .torsion import adjoint_array, invert_on_m, pi_m_array

log = logging.getLogger(__name__)

_trapezoid = getattr(np, "trapezoid", None) or np.trapz

CSV_HEADER = [
    "t", "E", "D", "dDdt", "dissipation", "sup_T", "sup_grad", "theta",
    "bianchi_linf", "bochner_ratio", "orbit_residual",
]


class CFLError(ValueError):
    pass


class FlowAborted(RuntimeError):
    """Raised when a run produces non-finite values."""

    def __init__(self, msg, last_good=None, checkpoint=None):
        super().__init__(msg)
        self.last_good = last_good
        self.checkpoint = checkpoint


@dataclass
class FlowState:
    field: StructureField
    t: float = 0.0
    step: int = 0

    @property
    def grid(self) -> PeriodicGrid:
        return self.field.grid

    @property
    def model(self):
        return self.field.model


@dataclass
class DiagRecord:
    t: float
    E: float
    D: float
    dDdt: float
    dissipation: float
    sup_T: float
    sup_grad: float
    theta: float | None = None
    bianchi_linf: float | None = None
    bochner_ratio: float | None = None
    orbit_residual: float | None = None
    step: int = 0
    extras: dict = field(default_factory=dict)

    def row(self) -> list[str]:
        out = []
        for name in CSV_HEADER:
            v = getattr(self, name)
            out.append("nan" if v is None else f"{v:.17g}")
        return out


def _unpack_parts(field: StructureField, arrays):
    return [lay.expand(a) for lay, a in zip(field.layouts, arrays)]


def _specs(field: StructureField):
    return [lay.spec for lay in field.layouts]


# ---------------------------------------------------------------- torsion


def gradients(field: StructureField, order: int = 2) -> list[list[np.ndarray]]:
    return [partial_derivative(field, l, order) for l in range(field.grid.n)]


def torsion_field(field: StructureField, order: int = 2, grads=None, workers: int = 1,
                  with_energy: bool = False):
    """Packed torsion, shape ``(n, n(n-1)/2) + res``; entry [l] is T_l.

    With ``with_energy`` also returns e = sum_l |T_l . xi|^2, the squared norm
    of the part of the discrete gradient tangent to the orbit.
    """
    grads = gradients(field, order) if grads is None else grads
    hm = field.model
    n = field.grid.n
    specs = _specs(field)
    flat = [g for gl in grads for g in gl]
    nparts = len(field.layouts)

    def fn(xs, *gs):
        out = []
        e = 0.0
        for l in range(n):
            ws = _unpack_parts(field, gs[l * nparts:(l + 1) * nparts])
            Tl = invert_on_m(hm, xs, adjoint_array(xs, ws, specs))
            out.append(skew_pack(Tl))
            if with_energy:
                for x, (p, q, wt) in zip(xs, specs):
                    v = diamond_array(Tl, x, p, q)
                    e = e + wt * np.sum((v * v).reshape(-1, v.shape[-1]), axis=0)
        return (np.stack(out), e) if with_energy else np.stack(out)

    return apply_pointwise(field, fn, flat, workers=workers, mult=2 + n)


def torsion_norm2(T: np.ndarray) -> np.ndarray:
    """|T|^2 = sum_l <T_l, T_l> at each point from packed torsion."""
    return 2.0 * np.sum(T * T, axis=(0, 1))


def project_m(field: StructureField, W: np.ndarray, workers: int = 1) -> np.ndarray:
    """Pointwise pi_m of a packed skew field ``(nskew,) + res``."""
    hm = field.model
    n = field.grid.n
    specs = _specs(field)

    def fn(xs, w):
        return skew_pack(pi_m_array(hm, xs, skew_unpack(w, n), specs))

    return apply_pointwise(field, fn, [W], workers=workers, mult=3)


def div_torsion(T: np.ndarray, field: StructureField, order: int = 2, project: bool = True,
                workers: int = 1) -> tuple[np.ndarray, float]:
    """(Div T, sup of the removed h-part).  Div T = sum_k d_k T_k."""
    g = field.grid
    C = sum(grid_diff(T[k], g, k, order) for k in range(g.n))
    if not project:
        return C, 0.0
    Cm = project_m(field, C, workers)
    return Cm, float(np.sqrt(2.0 * np.max(np.sum((C - Cm) ** 2, axis=0))))


def gradient_norm2(field: StructureField, grads) -> np.ndarray:
    return sum(field.pointwise_norm2(gl) for gl in grads)


# ---------------------------------------------------------------- stepping


@dataclass
class Analysis:
    """Torsion data of one state, reused by the step and the diagnostics.

    ``e`` is |T . xi|^2, the energy density of the orbit-tangent part of the
    discrete gradient, so D = c E holds to rounding for single-constant
    kinds.  ``e_raw`` is the squared norm of the raw difference quotients.
    """

    grads: list
    T: np.ndarray
    C: np.ndarray
    e: np.ndarray
    e_raw: np.ndarray
    T2: np.ndarray
    proj_residual: float

    def finish(self, grid: PeriodicGrid):
        self.E = 0.5 * integrate(self.T2, grid)
        self.D = 0.5 * integrate(self.e, grid)
        self.D_raw = 0.5 * integrate(self.e_raw, grid)
        self.sup_T = math.sqrt(float(np.max(self.T2)))
        self.sup_grad = math.sqrt(float(np.max(self.e)))
        return self


def analyze(field: StructureField, order: int = 2, workers: int = 1, project: bool = True) -> Analysis:
    grads = gradients(field, order)
    T, e = torsion_field(field, order, grads, workers, with_energy=True)
    C, pres = div_torsion(T, field, order, project, workers)
    an = Analysis(grads, T, C, e, gradient_norm2(field, grads), torsion_norm2(T), pres)
    return an.finish(field.grid)


def cfl_bound(grid: PeriodicGrid, sigma: float = 0.1) -> float:
    return sigma * min(h * h for h in grid.h)


def check_cfl(grid: PeriodicGrid, dt: float, sigma: float = 0.1):
    bound = cfl_bound(grid, sigma)
    if abs(dt) > bound * (1 + 1e-12):
        raise CFLError(f"time step {dt:.6g} exceeds the bound {sigma:g} * min(h^2) = {bound:.6g}")


def _advance(field: StructureField, C: np.ndarray, dt: float, workers: int = 1):
    """exp(dt C) acting pointwise; also returns |C diamond xi|^2."""
    n = field.grid.n
    specs = _specs(field)

    def fn(xs, c):
        Cm = skew_unpack(c, n)
        R = expm_skew_array(Cm, dt)
        Rt = np.swapaxes(R, 0, 1)
        out = []
        diss = 0.0
        for lay, x, (p, q, wt) in zip(field.layouts, xs, specs):
            v = diamond_array(Cm, x, p, q)
            diss = diss + wt * np.sum((v * v).reshape(-1, v.shape[-1]), axis=0)
            out.append(lay.compress(group_act_array(R, Rt, x, p, q)))
        return tuple(out) + (diss,)

    res = apply_pointwise(field, fn, [C], workers=workers, mult=4)
    return field.with_values(list(res[:-1])), res[-1]


def dissipation_density(field: StructureField, C: np.ndarray, workers: int = 1) -> np.ndarray:
    n = field.grid.n
    specs = _specs(field)

    def fn(xs, c):
        Cm = skew_unpack(c, n)
        acc = 0.0
        for x, (p, q, wt) in zip(xs, specs):
            v = diamond_array(Cm, x, p, q)
            acc = acc + wt * np.sum((v * v).reshape(-1, v.shape[-1]), axis=0)
        return acc

    return apply_pointwise(field, fn, [C], workers=workers, mult=2)


def flow_step(state: FlowState, dt: float, order: int = 2, cfl_sigma: float = 0.1,
              workers: int = 1, analysis: Analysis | None = None) -> FlowState:
    """One exponential step xi <- exp(dt Div T) . xi."""
    check_cfl(state.grid, dt, cfl_sigma)
    an = analysis or analyze(state.field, order, workers)
    new, _ = _advance(state.field, an.C, dt, workers)
    return FlowState(new, state.t + dt, state.step + 1)


def euler_step(state: FlowState, dt: float, order: int = 2) -> FlowState:
    """Forward Euler on the raw components, for comparison only."""
    an = analyze(state.field, order)
    n = state.grid.n
    specs = _specs(state.field)

    def fn(xs, c):
        Cm = skew_unpack(c, n)
        return tuple(
            lay.compress(x + dt * diamond_array(Cm, x, p, q))
            for lay, x, (p, q, _) in zip(state.field.layouts, xs, specs)
        )

    vals = apply_pointwise(state.field, fn, [an.C])
    vals = vals if isinstance(vals, tuple) else (vals,)
    return FlowState(state.field.with_values(list(vals)), state.t + dt, state.step + 1)


# ---------------------------------------------------------------- energies


def energies(state, order: int = 2, workers: int = 1) -> tuple[float, float, float]:
    """(E, D, dissipation) = (1/2 int |T|^2, 1/2 int |grad xi|^2, int |Div T . xi|^2)."""
    field = state.field if isinstance(state, FlowState) else state
    an = analyze(field, order, workers)
    diss = integrate(dissipation_density(field, an.C, workers), field.grid)
    return an.E, an.D, diss


# ---------------------------------------------------------------- orbit check


def orbit_residual_density(field: StructureField) -> np.ndarray:
    """Pointwise defect of the algebraic identities that cut out the orbit."""
    kind = field.model.kind
    n = field.grid.n
    eye = np.eye(n).reshape(n, n, 1)

    def fn(xs):
        if kind.tag == "trivial":
            F = np.stack([x for x in xs])  # (frame index, component, P)
            G = np.einsum("ai...,bi...->ab...", F, F) - eye
            return np.max(np.abs(G).reshape(-1, G.shape[-1]), axis=0)
        if kind.tag in ("u", "su"):
            J = xs[0]
            G = np.einsum("ij...,jk...->ik...", J, J) + eye
            r = np.max(np.abs(G).reshape(-1, G.shape[-1]), axis=0)
            if kind.tag == "su":
                m = kind.m
                d = diamond_array(J, xs[1], 0, m) + m * xs[2]
                r = np.maximum(r, np.max(np.abs(d).reshape(-1, d.shape[-1]), axis=0))
            return r
        if kind.tag == "g2":
            phi = xs[0]
            G = np.einsum("aij...,bij...->ab...", phi, phi) - 6 * eye
            return np.max(np.abs(G).reshape(-1, G.shape[-1]), axis=0)
        Phi = xs[0]
        G = np.einsum("aijk...,bijk...->ab...", Phi, Phi) - 42 * eye
        return np.max(np.abs(G).reshape(-1, G.shape[-1]), axis=0)

    return apply_pointwise(field, fn)


def orbit_residual(field: StructureField) -> float:
    return float(np.max(orbit_residual_density(field)))


# ---------------------------------------------------------------- Bianchi


def bianchi_density(field: StructureField, T: np.ndarray | None = None, order: int = 2) -> np.ndarray:
    """max over a < l of |d_a T_l - d_l T_a + 2[T_a, T_l] - pi_m([T_a, T_l])|."""
    g = field.grid
    n = g.n
    T = torsion_field(field, order) if T is None else T
    hm = field.model
    specs = _specs(field)
    pairs = [(a, l) for a in range(n) for l in range(a + 1, n)]
    curls = [grid_diff(T[l], g, a, order) - grid_diff(T[a], g, l, order) for a, l in pairs]
    Tflat = [T[l] for l in range(n)]

    def fn(xs, *arrs):
        Ts = [skew_unpack(t, n) for t in arrs[:n]]
        best = None
        for (a, l), curl in zip(pairs, arrs[n:]):
            br = np.einsum("ij...,jk...->ik...", Ts[a], Ts[l])
            br = br - np.swapaxes(br, 0, 1)
            res = skew_unpack(curl, n) + 2 * br - pi_m_array(hm, xs, br, specs)
            r = np.sqrt(np.sum((res * res).reshape(-1, res.shape[-1]), axis=0))
            best = r if best is None else np.maximum(best, r)
        return best

    return apply_pointwise(field, fn, Tflat + curls, mult=4)


def bianchi_residual(state, order: int = 2) -> np.ndarray:
    field = state.field if isinstance(state, FlowState) else state
    return bianchi_density(field, order=order)


# ---------------------------------------------------------------- Laplacian


def laplacian_residual_density(field: StructureField, order: int = 2, an: Analysis | None = None) -> np.ndarray:
    """|Lap xi - Div T . xi - sum_k T_k . (T_k . xi)| at each point (Div T not projected)."""
    g = field.grid
    n = g.n
    an = an or analyze(field, order, project=False)
    specs = _specs(field)
    laps = []
    for v in field.values:
        acc = np.zeros_like(v)
        for l in range(n):
            acc += second_diff(v, v.ndim - n + l, g.h[l], order)
        laps.append(acc)
    Tflat = [an.T[l] for l in range(n)]

    def fn(xs, c, *arrs):
        Cm = skew_unpack(c, n)
        Ts = [skew_unpack(t, n) for t in arrs[:n]]
        lap = _unpack_parts(field, arrs[n:])
        tot = 0.0
        for x, L, (p, q, wt) in zip(xs, lap, specs):
            r = L - diamond_array(Cm, x, p, q)
            for Tk in Ts:
                r = r - diamond_array(Tk, diamond_array(Tk, x, p, q), p, q)
            tot = tot + wt * np.sum((r * r).reshape(-1, r.shape[-1]), axis=0)
        return np.sqrt(tot)

    return apply_pointwise(field, fn, [an.C] + Tflat + laps, mult=4)


# ---------------------------------------------------------------- Theta / Psi


def heat_kernel(grid: PeriodicGrid, x0, tau: float, images: int = 1) -> np.ndarray:
    """Backward heat kernel (4 pi tau)^(-n/2) exp(-|x - x0|^2 / 4 tau), periodized.

    The lattice sum over the (2K+1)^n nearest images factorizes over axes.
    """
    if tau <= 0:
        raise ValueError("the heat kernel needs t < t0")
    x0 = np.asarray(x0, dtype=float)
    out = None
    for l in range(grid.n):
        x = grid.axis_coords(l)
        L = grid.side[l]
        acc = np.zeros_like(x)
        for k in range(-images, images + 1):
            d = x - x0[l] + k * L
            acc += np.exp(-d * d / (4 * tau))
        acc /= math.sqrt(4 * math.pi * tau)
        shape = [1] * grid.n
        shape[l] = grid.res[l]
        acc = acc.reshape(shape)
        out = acc if out is None else out * acc
    return np.broadcast_to(out, grid.res)


def theta_from_density(T2: np.ndarray, grid: PeriodicGrid, x0, t0: float, t: float, images: int = 1) -> float:
    if t >= t0:
        raise ValueError(f"theta needs t < t0 (t = {t}, t0 = {t0})")
    tau = t0 - t
    return tau * integrate(T2 * heat_kernel(grid, x0, tau, images), grid)


def theta(state: FlowState, x0, t0: float, truncation: int = 1, order: int = 2) -> float:
    """(t0 - t) int |T|^2 G over the torus."""
    if state.t >= t0:
        raise ValueError(f"theta needs t < t0 (t = {state.t}, t0 = {t0})")
    T2 = torsion_norm2(torsion_field(state.field, order))
    return theta_from_density(T2, state.grid, x0, t0, state.t, truncation)


def psi(history: Sequence[tuple[float, np.ndarray]], grid: PeriodicGrid, x0, t0: float, r: float,
        truncation: int = 1) -> float:
    """Time integral of theta / (t0 - t) over [t0 - 4 r^2, t0 - r^2].

    ``history`` holds ``(t, |T|^2 density)`` pairs sorted by time.  The
    trapezoid rule runs over the recorded times, with linear interpolation at
    the window ends.
    """
    a, b = t0 - 4 * r * r, t0 - r * r
    ts = np.array([h[0] for h in history], dtype=float)
    if len(ts) < 2 or ts[0] > a + 1e-12 * max(1.0, abs(a)) or ts[-1] < b - 1e-12 * max(1.0, abs(b)):
        raise ValueError(f"history [{ts[0] if len(ts) else None}, {ts[-1] if len(ts) else None}] "
                         f"does not cover [{a}, {b}]")
    vals = np.array([
        theta_from_density(T2, grid, x0, t0, t, truncation) / (t0 - t) if t < t0 else np.nan
        for t, T2 in history
    ])
    inside = (ts > a) & (ts < b)
    knots_t = np.concatenate([[a], ts[inside], [b]])
    knots_v = np.concatenate([[np.interp(a, ts, vals)], vals[inside], [np.interp(b, ts, vals)]])
    return float(_trapezoid(knots_v, knots_t))


# ---------------------------------------------------------------- other diagnostics


def torsion_evolution_residual(state: FlowState, dt: float, order: int = 2) -> tuple[float, float, float]:
    """Check the torsion evolution law along exp(+-dt C).

    Returns (sup residual of the m-parts, d/dt int |T|^2 measured,
    2 int <d_l C, T_l> predicted).
    """
    field = state.field
    g = field.grid
    n = g.n
    an = analyze(field, order)
    plus, _ = _advance(field, an.C, dt)
    minus, _ = _advance(field, an.C, -dt)
    Tp = torsion_field(plus, order)
    Tm = torsion_field(minus, order)
    dT = (Tp - Tm) / (2 * dt)
    dC = [grid_diff(an.C, g, l, order) for l in range(n)]
    hm = field.model
    specs = _specs(field)

    def fn(xs, c, *arrs):
        Cm = skew_unpack(c, n)
        best = None
        for l in range(n):
            Tl = skew_unpack(arrs[l], n)
            br = np.einsum("ij...,jk...->ik...", Tl, Cm)
            br = br - np.swapaxes(br, 0, 1)
            pred = br + skew_unpack(arrs[n + l], n)
            diff_ = pi_m_array(hm, xs, skew_unpack(arrs[2 * n + l], n) - pred, specs)
            r = np.sqrt(np.sum((diff_ * diff_).reshape(-1, diff_.shape[-1]), axis=0))
            best = r if best is None else np.maximum(best, r)
        return best

    dens = apply_pointwise(field, fn, [an.C] + [an.T[l] for l in range(n)] + dC + [dT[l] for l in range(n)], mult=4)
    measured = (integrate(torsion_norm2(Tp), g) - integrate(torsion_norm2(Tm), g)) / (2 * dt)
    predicted = 2 * sum(2.0 * integrate(np.sum(dC[l] * an.T[l], axis=0), g) for l in range(n))
    return float(np.max(dens)), measured, predicted


def bochner_ratio(e_now: np.ndarray, e_next: np.ndarray, dt: float, grid: PeriodicGrid,
                  floor: float = 1e-8, order: int = 2) -> float:
    """sup [(d_t - Lap) e]_+ / max(e^2, floor) with e = |grad xi|^2."""
    lap = np.zeros_like(e_now)
    for l in range(grid.n):
        lap += second_diff(e_now, l, grid.h[l], order)
    heat = (e_next - e_now) / dt - lap
    return float(np.max(np.maximum(heat, 0.0) / np.maximum(e_now * e_now, floor)))


def first_eigenvalue(grid: PeriodicGrid) -> float:
    """Smallest nonzero eigenvalue of the rough Laplacian on 2-forms of the flat torus."""
    return (2 * math.pi / max(grid.side)) ** 2


def convexity_terms(T2: np.ndarray, C: np.ndarray, grid: PeriodicGrid) -> tuple[float, float]:
    """(int |Div T|^2, int (Lambda - 12 |T|^2) |Div T|^2)."""
    c2 = 2.0 * np.sum(C * C, axis=0)
    lam = first_eigenvalue(grid)
    return integrate(c2, grid), integrate((lam - 12.0 * T2) * c2, grid)


@dataclass
class ConvexityReport:
    t: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    active: np.ndarray
    tol: float

    @property
    def ok(self) -> bool:
        scale = np.maximum(np.abs(self.rhs), 1e-300)
        good = self.lhs >= self.rhs - self.tol * scale
        return bool(np.all(good[self.active]))

    @property
    def worst(self) -> float:
        if not np.any(self.active):
            return 0.0
        scale = np.maximum(np.abs(self.rhs), 1e-300)
        return float(np.max(((self.rhs - self.lhs) / scale)[self.active]))


def convexity_check(history: Sequence[DiagRecord], grid: PeriodicGrid, tol: float = 1e-2) -> ConvexityReport:
    """Compare -d/dt int |Div T|^2 (central differences) with the convexity bound."""
    recs = [r for r in history if "div_norm2" in r.extras]
    if len(recs) < 3:
        raise ValueError("convexity check needs at least three records carrying Div T norms")
    t = np.array([r.t for r in recs])
    F = np.array([r.extras["div_norm2"] for r in recs])
    R = np.array([r.extras["convexity_rhs"] for r in recs])
    s2 = np.array([r.sup_T ** 2 for r in recs])
    lhs = -(F[2:] - F[:-2]) / (t[2:] - t[:-2])
    lam = first_eigenvalue(grid)
    return ConvexityReport(t[1:-1], lhs, R[1:-1], s2[1:-1] < lam / 24, tol)


def soliton_residual(state, X: np.ndarray, c: float = 0.0, order: int = 2) -> float:
    """sup |Div T - X.T - pi_m(skew grad X)| for a vector field X of shape ``(n,) + res``."""
    field = state.field if isinstance(state, FlowState) else state
    g = field.grid
    n = g.n
    X = np.asarray(X, dtype=float)
    if X.shape != (n,) + g.res:
        raise ValueError(f"vector field of shape {X.shape}, expected {(n,) + g.res}")
    an = analyze(field, order)
    # (grad X)_ij = d_j X_i
    dX = np.stack([np.stack([grid_diff(X[i], g, j, order) for j in range(n)]) for i in range(n)])
    skew = skew_pack(0.5 * (dX - np.swapaxes(dX, 0, 1)))
    skew_m = project_m(field, skew)
    XT = np.einsum("l...,lc...->c...", X, an.T)
    res = an.C - XT - skew_m
    return float(np.sqrt(2.0 * np.max(np.sum(res * res, axis=0))))


def soliton_metric_residual(X: np.ndarray, grid: PeriodicGrid, c: float, order: int = 2) -> float:
    """sup |d_i X_j + d_j X_i - c delta_ij|."""
    n = grid.n
    dX = np.stack([np.stack([grid_diff(X[i], grid, j, order) for j in range(n)]) for i in range(n)])
    sym = dX + np.swapaxes(dX, 0, 1) - c * np.eye(n).reshape((n, n) + (1,) * n)
    return float(np.max(np.abs(sym)))


def soliton_scaling_factor(l: int, alpha: float, c: float, t: float) -> float:
    """Scale factor of the self-similar solution generated by a soliton.

    rho(t) = (1 + l(alpha-1) c t / 2)^(-1/(l(alpha-1))), and exp(-c t / 2)
    when l(alpha-1) = 0.
    """
    k = l * (alpha - 1.0)
    if k == 0:
        return math.exp(-c * t / 2)
    base = 1.0 + 0.5 * k * c * t
    if base <= 0:
        raise ValueError(f"t = {t} lies outside the existence interval of the self-similar solution")
    return base ** (-1.0 / k)


def parabolic_rescale(state: FlowState, lam: float) -> FlowState:
    """lambda^l xi(lambda^-2 t), written in unit-metric coordinates.

    In coordinates y = lambda x the metric lambda^2 g becomes the unit metric
    on a torus of side lambda L, and the weight lambda^l on each part is
    exactly absorbed by the change of coordinates.  The stored components are
    therefore unchanged; side lengths scale by lambda and time by lambda^2.
    """
    if not lam > 0:
        raise ValueError("the rescaling factor must be positive")
    return FlowState(state.field.with_grid(state.grid.scaled(lam)), lam * lam * state.t, state.step)


def rescaled_components(state: FlowState, lam: float) -> list[np.ndarray]:
    """Components of lambda^l xi on the original torus (metric lambda^2 g)."""
    return [lam ** (lay.q - lay.p) * v for lay, v in zip(state.field.layouts, state.field.values)]


# ---------------------------------------------------------------- driver


@dataclass
class RunConfig:
    order: int = 2
    cfl_sigma: float = 0.1
    diag_cadence: int = 1
    blowup_factor: float = 100.0
    converge_factor: float = 1e-6
    max_steps: int | None = None
    theta_x0: Sequence[float] | None = None
    theta_t0: float | None = None
    theta_images: int = 1
    bianchi: bool = False
    bochner: bool = True
    bochner_floor: float = 1e-8
    orbit: bool = True
    keep_density: bool = False
    checkpoint_dir: str | None = None
    checkpoint_cadence: int = 0
    workers: int = 1


@dataclass
class RunResult:
    state: FlowState
    records: list[DiagRecord]
    outcome: str
    sup_T0: float
    E0: float
    D0: float
    densities: list = field(default_factory=list)

    @property
    def tau_observed(self) -> float:
        return self.state.t


def checkpoint_path(directory, step: int) -> Path:
    return Path(directory) / f"step_{step:08d}.hstf"


def save_state(path, state: FlowState, meta: dict | None = None) -> Path:
    """Checkpoint plus a JSON sidecar carrying the time, step and driver memory."""
    path = Path(path)
    write_checkpoint(path, state.field)
    side = {"t": state.t, "step": state.step}
    side.update(meta or {})
    tmp = path.with_suffix(".json.tmp")
    tmp.write_text(json.dumps(side, indent=1))
    tmp.replace(path.with_suffix(".json"))
    return path


def load_state(path) -> tuple[FlowState, dict]:
    path = Path(path)
    field = read_checkpoint(path)
    side_path = path.with_suffix(".json")
    meta = json.loads(side_path.read_text()) if side_path.exists() else {"t": 0.0, "step": 0}
    return FlowState(field, float(meta["t"]), int(meta["step"])), meta


def run_flow(state0: FlowState, dt: float, t_end: float, callbacks: Sequence[Callable] = (),
             config: RunConfig | None = None, resume: dict | None = None) -> RunResult:
    """Integrate until t_end, the blow-up threshold or the convergence threshold.

    ``resume`` is the sidecar of a checkpoint written by an earlier run; it
    restores the reference scale of the stop rules and the previous D used by
    the centred dD/dt, so a split run reproduces an uninterrupted one.
    """
    cfg = config or RunConfig()
    check_cfl(state0.grid, dt, cfg.cfl_sigma)
    grid = state0.grid
    state = state0
    an = analyze(state.field, cfg.order, cfg.workers)
    if resume:
        sup0, E0, D0 = resume["sup_T0"], resume["E0"], resume["D0"]
        prev_D = resume.get("prev_D")
    else:
        sup0, E0, D0 = an.sup_T, an.E, an.D
        prev_D = None
    records: list[DiagRecord] = []
    densities = []
    outcome = "timed_out"
    ckdir = Path(cfg.checkpoint_dir) if cfg.checkpoint_dir else None
    if ckdir:
        ckdir.mkdir(parents=True, exist_ok=True)
    last_ckpt = None

    def save(st, pD):
        nonlocal last_ckpt
        meta = {"sup_T0": sup0, "E0": E0, "D0": D0, "prev_D": pD}
        last_ckpt = save_state(checkpoint_path(ckdir, st.step), st, meta)

    while True:
        if ckdir and cfg.checkpoint_cadence and state.step % cfg.checkpoint_cadence == 0:
            save(state, prev_D)
        stop = None
        if sup0 == 0.0 or an.sup_T <= cfg.converge_factor * sup0:
            stop = "converged"
        elif an.sup_T >= cfg.blowup_factor * sup0:
            stop = "blew_up"
        elif state.t >= t_end - 1e-12 * max(1.0, abs(t_end)) or (
                cfg.max_steps is not None and state.step - state0.step >= cfg.max_steps):
            stop = "timed_out"
        if stop is None:
            new_field, diss_dens = _advance(state.field, an.C, dt, cfg.workers)
            new_state = FlowState(new_field, state.t + dt, state.step + 1)
            an_next = analyze(new_field, cfg.order, cfg.workers)
            if not (math.isfinite(an_next.D) and math.isfinite(an_next.sup_T)):
                raise FlowAborted(f"non-finite values at t = {new_state.t}", state, last_ckpt)
        else:
            diss_dens = dissipation_density(state.field, an.C, cfg.workers)
            new_state = an_next = None
        emit = stop is not None or state.step % max(1, cfg.diag_cadence) == 0
        if emit:
            if an_next is not None and prev_D is not None:
                dDdt = (an_next.D - prev_D) / (2 * dt)
            elif an_next is not None:
                dDdt = (an_next.D - an.D) / dt
            elif prev_D is not None:
                dDdt = (an.D - prev_D) / dt
            else:
                dDdt = 0.0
            rec = DiagRecord(
                t=state.t, E=an.E, D=an.D, dDdt=dDdt,
                dissipation=integrate(diss_dens, grid),
                sup_T=an.sup_T, sup_grad=an.sup_grad, step=state.step,
            )
            if cfg.theta_t0 is not None and state.t < cfg.theta_t0:
                x0 = cfg.theta_x0 if cfg.theta_x0 is not None else [0.5 * L for L in grid.side]
                rec.theta = theta_from_density(an.T2, grid, x0, cfg.theta_t0, state.t, cfg.theta_images)
            if cfg.bianchi:
                rec.bianchi_linf = float(np.max(bianchi_density(state.field, an.T, cfg.order)))
            if cfg.bochner and an_next is not None:
                rec.bochner_ratio = bochner_ratio(an.e, an_next.e, dt, grid, cfg.bochner_floor, cfg.order)
            if cfg.orbit:
                rec.orbit_residual = orbit_residual(state.field)
            F, R = convexity_terms(an.T2, an.C, grid)
            rec.extras.update(div_norm2=F, convexity_rhs=R, proj_residual=an.proj_residual, D_raw=an.D_raw)
            records.append(rec)
            if cfg.keep_density:
                densities.append((state.t, an.T2.copy()))
            for cb in callbacks:
                cb(state, rec)
        if stop is not None:
            outcome = stop
            break
        prev_D = an.D
        state, an = new_state, an_next
    if ckdir:
        save(state, prev_D)
    return RunResult(state, records, outcome, sup0, E0, D0, densities)


def write_csv(records: Sequence[DiagRecord], path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in records:
            w.writerow(r.row())
    return path


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: float(v) for k, v in row.items()} for row in rows]


