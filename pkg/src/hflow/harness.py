"""Initial data, experiment configuration and experiment runners.

The bump families replace a torsion-free structure inside a ball B(p, r) by
a structure that winds once around the orbit.  For G2 the winding is the
suspension-type map into S^7 composed with the explicit parametrisation of
G2 3-forms by unit vectors (f, X).  For U(2) on T^4 the winding is the
collapse of the ball onto S^4 followed by the suspended Hopf map and the
Hopf map, landing in S^2 = SO(4)/U(2).
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .algebra import (
    diamond_array,
    expm_skew_array,
    group_act_array,
    levi_civita,
)
from .fields import PeriodicGrid, StructureField, layouts_for
from .flow import FlowState, RunConfig, cfl_bound, load_state, run_flow, write_csv
from .models import HKind, HModel, model, param_g2_array

log = logging.getLogger(__name__)

SCHEMA = 1


# ---------------------------------------------------------------- profiles


def smoothstep5(x):
    """6x^5 - 15x^4 + 10x^3 on [0, 1], clamped outside; C^2-flat at both ends."""
    x = np.clip(x, 0.0, 1.0)
    return x * x * x * (x * (6 * x - 15) + 10)


def default_profile(s):
    """theta(s) = pi chi(1 - s): pi at the centre, 0 for s >= 1."""
    return math.pi * smoothstep5(1.0 - np.asarray(s, dtype=float))


def poly6_profile(s):
    """pi (1 - s^2)^6 for s < 1, else 0.

    A polynomial in s^2, so the bump built from it is smooth at the centre,
    and C^5 across the sphere s = 1.  The default profile is only C^2 at the
    edge and at the centre (an |x|^3 term), which caps the convergence order
    of finite-difference identities involving third derivatives at one.
    """
    s2 = np.asarray(s, dtype=float) ** 2
    return math.pi * np.clip(1.0 - s2, 0.0, None) ** 6


def displacement(grid: PeriodicGrid, center, rows: np.ndarray | None = None) -> list[np.ndarray]:
    """Minimum-image x - p as open-mesh arrays.

    ``rows`` selects (possibly wrapped) indices along axis 0, which lets large
    grids be generated slab by slab.
    """
    center = [0.5 * L for L in grid.side] if center is None else list(center)
    out = []
    for l in range(grid.n):
        L = grid.side[l]
        idx = np.arange(grid.res[l]) if (l > 0 or rows is None) else np.asarray(rows)
        x = np.mod(idx, grid.res[l]) * grid.h[l]
        d = np.mod(x - center[l] + 0.5 * L, L) - 0.5 * L
        shape = [1] * grid.n
        shape[l] = d.size
        out.append(d.reshape(shape))
    return out


def _check_radius(grid: PeriodicGrid, r: float):
    if not 0 < r < 0.5 * min(grid.side):
        raise ValueError(f"bump radius {r} must lie in (0, {0.5 * min(grid.side)})")


def _unit_radial(disp, r, profile):
    """(theta(|d|/r), d/|d|) with the direction set to 0 at the centre."""
    rad = np.sqrt(sum(d * d for d in disp))
    s = rad / r
    theta = profile(s)
    safe = np.where(rad > 0, rad, 1.0)
    dirs = [np.where(rad > 0, d / safe, 0.0) for d in disp]
    return theta, dirs


# ---------------------------------------------------------------- G2 bump


def g2_bump_values(disp, r: float, profile=default_profile, chunk: int = 20000) -> np.ndarray:
    """Stored components (35, *shape) of the G2 bump at the given displacements."""
    hm = model("g2")
    lay = layouts_for(hm)[0]
    phi = hm.xi0[0].data
    psi = hm.extras["psi"].data
    theta, dirs = _unit_radial(disp, r, profile)
    shape = np.broadcast_shapes(*[d.shape for d in disp])
    theta = np.broadcast_to(theta, shape).reshape(-1)
    dirs = np.stack([np.broadcast_to(d, shape).reshape(-1) for d in dirs], axis=-1)
    P = theta.size
    out = np.empty((lay.ncomp, P))
    for a in range(0, P, chunk):
        sl = slice(a, min(a + chunk, P))
        f = np.cos(theta[sl])
        X = np.sin(theta[sl])[:, None] * dirs[sl]
        dense = param_g2_array(f, X, phi, psi)  # (P, 7, 7, 7)
        out[:, sl] = lay.compress(np.moveaxis(dense, 0, -1))
        # outside the ball the parametrisation returns phi0 exactly
    return out.reshape((lay.ncomp,) + shape)


def make_bump_g2(grid: PeriodicGrid, r: float, profile=default_profile, center=None) -> StructureField:
    if grid.n != 7:
        raise ValueError("the G2 bump lives on a 7-torus")
    _check_radius(grid, r)
    return StructureField(grid, model("g2"), [g2_bump_values(displacement(grid, center), r, profile)])


# ---------------------------------------------------------------- quaternions and U(2)

# quaternion component q0 + q1 i + q2 j + q3 k sits on axis QPERM[a] of R^4;
# with this identification left multiplication by i is the model J0
QPERM = (0, 2, 1, 3)


def qmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product of quaternion arrays with the component axis first."""
    a0, a1, a2, a3 = a
    b0, b1, b2, b3 = b
    return np.stack([
        a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
        a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
        a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
        a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0,
    ])


def qconj(a: np.ndarray) -> np.ndarray:
    return np.concatenate([a[:1], -a[1:]])


def hopf(q: np.ndarray) -> np.ndarray:
    """eta(q) = q i q-bar, as the imaginary part (3, ...)."""
    i = np.zeros_like(q)
    i[1] = 1.0
    return qmul(qmul(q, i), qconj(q))[1:]


def suspended_hopf(y0: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Suspension of eta: (y0, w) on S^4 in R x R^4 goes to (y0, |w| eta(w/|w|)) on S^3.

    Since eta is quadratic, |w| eta(w/|w|) = eta(w)/|w|, which extends by 0
    to the poles.
    """
    nw = np.sqrt(np.sum(w * w, axis=0))
    safe = np.where(nw > 0, nw, 1.0)
    v = np.where(nw > 0, hopf(w) / safe, 0.0)
    return np.concatenate([y0[None], v])


def left_mult_matrix(u: np.ndarray) -> np.ndarray:
    """Matrix (4, 4, ...) of q -> u q in the R^4 ordering given by QPERM."""
    out = np.zeros((4, 4) + u.shape[1:])
    for b in range(4):
        e = np.zeros((4,) + u.shape[1:])
        e[b] = 1.0
        col = qmul(u, e)
        for a in range(4):
            out[QPERM[a], QPERM[b]] = col[a]
    return out


def complex_structure_of(u: np.ndarray) -> np.ndarray:
    """J_u = left multiplication by the unit imaginary quaternion u (3, ...)."""
    return left_mult_matrix(np.concatenate([np.zeros((1,) + u.shape[1:]), u]))


def collapse_to_sphere(disp, r: float, profile=default_profile):
    """Degree-one map of B(p, r) onto S^4 sending the boundary to the north pole.

    Returns (y0, w) with y0 = cos theta and w = sin theta (x - p)/|x - p|.
    """
    theta, dirs = _unit_radial(disp, r, profile)
    shape = np.broadcast_shapes(*[d.shape for d in disp])
    s = np.sin(theta)
    return np.broadcast_to(np.cos(theta), shape), np.stack([np.broadcast_to(s * d, shape) for d in dirs])


def u2_bump_u(disp, r: float, homotopy_class: str = "trivial", amplitude: float = 0.5,
              profile=default_profile) -> np.ndarray:
    """The S^2-valued map u (3, *shape), equal to i outside the ball.

    The trivial class rotates i towards j by the angle amplitude * theta / pi.
    """
    shape = np.broadcast_shapes(*[d.shape for d in disp])
    if homotopy_class == "eta_class":
        y0, w = collapse_to_sphere(disp, r, profile)
        z = suspended_hopf(y0, w)  # point of S^3 as a quaternion
        return hopf(z)
    if homotopy_class == "trivial":
        rad = np.sqrt(sum(d * d for d in disp))
        beta = amplitude * profile(rad / r) / math.pi
        beta = np.broadcast_to(beta, shape)
        return np.stack([np.cos(beta), np.sin(beta), np.zeros(shape)])
    raise ValueError(f"unknown homotopy class {homotopy_class!r}")


def u2_bump_values(disp, r: float, homotopy_class: str = "trivial", amplitude: float = 0.5,
                   profile=default_profile) -> np.ndarray:
    u = u2_bump_u(disp, r, homotopy_class, amplitude, profile)
    lay = layouts_for(model("u2"))[0]
    return lay.compress(complex_structure_of(u))


def make_bump_u2(grid: PeriodicGrid, r: float, profile=default_profile, homotopy_class: str = "trivial",
                 amplitude: float = 0.5, center=None) -> StructureField:
    if grid.n != 4:
        raise ValueError("the U(2) bump lives on a 4-torus")
    _check_radius(grid, r)
    vals = u2_bump_values(displacement(grid, center), r, homotopy_class, amplitude, profile)
    return StructureField(grid, model("u2"), [vals])


# ---------------------------------------------------------------- topology checks


def sphere_map_degree(fn, n_theta: int = 24) -> float:
    """Degree of a map from the closed unit 4-ball to S^4 that is constant on the boundary.

    Integrates the pulled-back volume form of S^4 with centred differences
    over a Cartesian mesh of the ball and divides by vol(S^4) = 8 pi^2 / 3.
    """
    h = 2.0 / n_theta
    ax = -1.0 + h * (np.arange(n_theta) + 0.5)
    mesh = np.meshgrid(ax, ax, ax, ax, indexing="ij")
    eps = 1e-6
    eps_sym = levi_civita(5)

    def at(pts):
        return fn(pts)  # (5, ...)

    base = [m.copy() for m in mesh]
    y = at(base)
    jac = []
    for l in range(4):
        plus = [m.copy() for m in base]
        minus = [m.copy() for m in base]
        plus[l] += eps
        minus[l] -= eps
        jac.append((at(plus) - at(minus)) / (2 * eps))
    # pulled-back volume density det[y, dy/dx1, ..., dy/dx4]
    dens = np.einsum("abcde,a...,b...,c...,d...,e...->...", eps_sym, y, *jac)
    inside = sum(m * m for m in mesh) < 1.0
    return float(np.sum(dens[inside]) * h ** 4 / (8 * math.pi ** 2 / 3))


def hopf_linking_number(p: np.ndarray, q: np.ndarray, samples: int = 400) -> float:
    """Gauss linking number of the Hopf fibres over two points of S^2.

    The fibres are stereographically projected from S^3 to R^3 and the
    double line integral is summed with the midpoint rule.
    """
    # project from a pole whose fibre is far from both circles; moving the
    # pole to 1 is a left multiplication, an orientation-preserving isometry
    cands = [np.array(c, dtype=float) / np.linalg.norm(c) for c in
             ([1, 0, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1], [1, 0, 1, 0], [1, 0, 0, 1])]
    unit = [np.asarray(v, dtype=float) / np.linalg.norm(v) for v in (p, q)]
    pole = max(cands, key=lambda c: min(np.linalg.norm(hopf(c[:, None])[:, 0] - u) for u in unit))

    def fibre(v):
        v = np.asarray(v, dtype=float)
        v = v / np.linalg.norm(v)
        # a preimage: q0 with q0 i q0-bar = v, then the circle q0 e^{i t}
        axis = np.cross([1.0, 0.0, 0.0], v)
        ang = math.acos(np.clip(v[0], -1, 1))
        if np.linalg.norm(axis) < 1e-12:
            axis = np.array([0.0, 0.0, 1.0])
        axis = axis / np.linalg.norm(axis)
        q0 = np.concatenate([[math.cos(ang / 2)], math.sin(ang / 2) * axis])
        t = np.linspace(0, 2 * math.pi, samples, endpoint=False)
        rot = np.stack([np.cos(t), np.sin(t), np.zeros_like(t), np.zeros_like(t)])
        pts = qmul(q0[:, None] * np.ones_like(rot), rot)
        pts = qmul(qconj(pole)[:, None] * np.ones_like(pts), pts)
        return pts[1:] / (1.0 - pts[0])  # stereographic projection (3, samples)

    a, b = fibre(p), fibre(q)
    da = np.roll(a, -1, axis=1) - a
    db = np.roll(b, -1, axis=1) - b
    ma = a + 0.5 * da
    mb = b + 0.5 * db
    diff = ma[:, :, None] - mb[:, None, :]
    dist3 = np.sum(diff * diff, axis=0) ** 1.5
    cross = np.cross(da.T[:, None, :], db.T[None, :, :])  # (sa, sb, 3)
    integrand = np.einsum("ijk,kij->ij", cross, diff) / dist3
    return float(np.sum(integrand) / (4 * math.pi))


# ---------------------------------------------------------------- experiments


INITIAL_KINDS = ("torsion_free", "bump", "nontrivial_bump")
PROFILES = {"smoothstep5": default_profile, "poly6": poly6_profile}


@dataclass
class ExperimentConfig:
    kind: str = "u2"
    res: int | list = 16
    side: float | list = 2 * math.pi
    initial: str = "bump"
    r: float = 1.5
    profile: str = "smoothstep5"
    amplitude: float = 0.5
    center: list | None = None
    noise: float = 0.0
    dt_sigma: float = 0.1
    cfl_sigma: float = 0.1
    t_end: float = 1.0
    max_steps: int = 0
    blowup_factor: float = 100.0
    converge_factor: float = 1e-6
    diag_cadence: int = 1
    checkpoint_cadence: int = 0
    order: int = 2
    workers: int = 1
    theta_t0: float | None = None
    theta_x0: list | None = None
    seed: int = 0

    def __post_init__(self):
        HKind.parse(self.kind)
        if self.initial not in INITIAL_KINDS:
            raise ValueError(f"initial must be one of {INITIAL_KINDS}, got {self.initial!r}")
        for name in ("dt_sigma", "cfl_sigma", "blowup_factor", "converge_factor", "t_end"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.dt_sigma > self.cfl_sigma:
            raise ValueError(f"dt_sigma {self.dt_sigma} exceeds the CFL factor {self.cfl_sigma}")
        if self.profile not in PROFILES:
            raise ValueError(f"profile must be one of {sorted(PROFILES)}, got {self.profile!r}")
        if self.order not in (2, 4):
            raise ValueError("order must be 2 or 4")
        if self.diag_cadence < 1 or self.checkpoint_cadence < 0 or self.max_steps < 0:
            raise ValueError("cadences and max_steps must be non-negative (diag_cadence >= 1)")
        if self.initial != "torsion_free":
            _check_radius(self.grid(), self.r)

    @property
    def hkind(self) -> HKind:
        return HKind.parse(self.kind)

    def grid(self) -> PeriodicGrid:
        n = self.hkind.n
        res = [self.res] * n if np.isscalar(self.res) else list(self.res)
        side = [self.side] * n if np.isscalar(self.side) else list(self.side)
        return PeriodicGrid(res, side)

    @property
    def dt(self) -> float:
        return cfl_bound(self.grid(), self.dt_sigma)

    def run_config(self, checkpoint_dir=None) -> RunConfig:
        return RunConfig(
            order=self.order, cfl_sigma=self.cfl_sigma, diag_cadence=self.diag_cadence,
            blowup_factor=self.blowup_factor, converge_factor=self.converge_factor,
            max_steps=self.max_steps or None, theta_t0=self.theta_t0, theta_x0=self.theta_x0,
            checkpoint_dir=str(checkpoint_dir) if checkpoint_dir else None,
            checkpoint_cadence=self.checkpoint_cadence, workers=self.workers,
        )

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        unknown = set(data) - set(cls.keys())
        if unknown:
            raise KeyError(f"unknown configuration keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


def initial_field(cfg: ExperimentConfig) -> StructureField:
    grid = cfg.grid()
    hm = model(cfg.hkind)
    if cfg.initial == "torsion_free":
        fld = StructureField.constant(grid, hm)
    elif cfg.hkind.tag == "g2":
        if cfg.initial != "bump":
            raise ValueError("the G2 family has only the 'bump' initial datum")
        fld = make_bump_g2(grid, cfg.r, PROFILES[cfg.profile], center=cfg.center)
    elif cfg.hkind == HKind("u", 2):
        cls = "eta_class" if cfg.initial == "nontrivial_bump" else "trivial"
        fld = make_bump_u2(grid, cfg.r, PROFILES[cfg.profile], cls, cfg.amplitude, cfg.center)
    else:
        raise ValueError(f"no bump family for {cfg.hkind}")
    if cfg.noise:
        fld = perturb(fld, cfg.noise, cfg.seed)
    return fld


def perturb(fld: StructureField, amplitude: float, seed: int) -> StructureField:
    """Act by exp(C) with C a smooth random skew field of the given size."""
    rng = np.random.default_rng(seed)
    g = fld.grid
    n = g.n
    x = g.coords()
    C = np.zeros((n, n) + g.res)
    for a in range(n):
        for b in range(a + 1, n):
            k = rng.integers(-1, 2, size=n)
            ph = rng.uniform(0, 2 * math.pi)
            arg = sum(2 * math.pi * k[l] * x[l] / g.side[l] for l in range(n)) + ph
            C[a, b] = amplitude * rng.normal() * np.cos(arg)
            C[b, a] = -C[a, b]
    R = expm_skew_array(C, 1.0)
    Rt = np.swapaxes(R, 0, 1)
    vals = []
    for lay, v in zip(fld.layouts, fld.values):
        vals.append(lay.compress(group_act_array(R, Rt, lay.expand(v), lay.p, lay.q)))
    return fld.with_values(vals)


@dataclass
class ExperimentReport:
    summary: dict
    result: object = None

    @property
    def outcome(self) -> str:
        return self.summary["outcome"]


def run_experiment(cfg: ExperimentConfig, out_dir=None, resume=None, callbacks=()) -> ExperimentReport:
    """Run one flow and write diagnostics.csv, checkpoints and summary.json under ``out_dir``."""
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OSError(f"cannot create output directory {out}: {exc}") from exc
    meta = None
    if resume is not None:
        state, meta = load_state(resume)
        if state.field.model.kind != cfg.hkind or state.grid != cfg.grid():
            raise ValueError(f"checkpoint {resume} does not match the configured kind and grid")
    else:
        state = FlowState(initial_field(cfg))
    ck = out / "checkpoints" if out is not None and cfg.checkpoint_cadence else None
    res = run_flow(state, cfg.dt, cfg.t_end, callbacks, cfg.run_config(ck),
                   resume=meta if meta and "sup_T0" in meta else None)
    summary = {
        "schema": SCHEMA,
        "outcome": res.outcome,
        "tau_observed": res.state.t,
        "steps": res.state.step,
        "E0": res.E0,
        "D0": res.D0,
        "sup_T0": res.sup_T0,
        "final_sup_T": res.records[-1].sup_T if res.records else None,
        "final_E": res.records[-1].E if res.records else None,
        "dt": cfg.dt,
        "config": cfg.to_dict(),
    }
    if out is not None:
        csv_path = out / "diagnostics.csv"
        try:
            if meta is not None and csv_path.exists():
                _append_csv(res.records, csv_path, after=meta["t"])
            else:
                write_csv(res.records, csv_path)
            (out / "summary.json").write_text(json.dumps(summary, indent=2))
        except OSError as exc:
            raise OSError(f"failed writing results to {out}: {exc}") from exc
    return ExperimentReport(summary, res)


def _append_csv(records, path: Path, after: float):
    """Append records newer than ``after`` (the resumed record replaces the last stored one)."""
    lines = path.read_text().splitlines()
    header, rows = lines[0], lines[1:]
    keep = [r for r in rows if float(r.split(",")[0]) < after]
    tmp = path.with_suffix(".tmp")
    write_csv(records, tmp)
    new_rows = tmp.read_text().splitlines()[1:]
    tmp.unlink()
    path.write_text("\n".join([header] + keep + new_rows) + "\n")


def blowup_sweep(cfg: ExperimentConfig, radii: Sequence[float], out_dir=None) -> list[dict]:
    """Run the same configuration at each radius; one summary per radius."""
    out = []
    for i, r in enumerate(radii):
        sub = ExperimentConfig.from_dict({**cfg.to_dict(), "r": float(r)})
        d = Path(out_dir) / f"r_{i}" if out_dir is not None else None
        rep = run_experiment(sub, d)
        out.append({**rep.summary, "r": float(r)})
    return out


def tau_decreasing(summaries: Sequence[dict]) -> bool:
    """True when every run blew up and tau decreases strictly with decreasing r."""
    s = sorted(summaries, key=lambda d: -d["r"])
    if any(d["outcome"] != "blew_up" for d in s):
        return False
    return all(a["tau_observed"] > b["tau_observed"] for a, b in zip(s, s[1:]))


# ---------------------------------------------------------------- identity suites


def random_tensor(rng, n: int, p: int, q: int) -> np.ndarray:
    return rng.normal(size=(n,) * (p + q))


def random_rotation(rng, n: int) -> np.ndarray:
    Q, R = np.linalg.qr(rng.normal(size=(n, n)))
    Q = Q * np.sign(np.diag(R))
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    return Q


def random_orbit_point(hm: HModel, rng) -> list[np.ndarray]:
    R = random_rotation(rng, hm.n)
    return [group_act_array(R, R.T, t.data, t.p, t.q) for t in hm.xi0]


def verify_algebra(n: int, trials: int = 100, seed: int = 0) -> dict[str, float]:
    """Maximum residual of each diamond identity over random instances at dimension n."""
    from .algebra import alternation, bracket, sym_skew_split

    rng = np.random.default_rng(seed)
    res = {k: 0.0 for k in ("commutator", "homomorphism", "antisymmetry", "net_degree",
                            "metric", "volume", "skew_orthogonal", "skew_adjoint")}
    eye = np.eye(n)
    vol = levi_civita(n)

    def upd(key, val):
        res[key] = max(res[key], float(val))

    for _ in range(trials):
        A, B = rng.normal(size=(2, n, n))
        D = rng.normal(size=(n, n))
        D = D - D.T
        p, q = int(rng.integers(0, 3)), int(rng.integers(0, 3))
        if p + q == 0:
            q = 1
        xi = random_tensor(rng, n, p, q)
        scale = 1.0 + np.max(np.abs(xi))
        upd("commutator", np.max(np.abs(diamond_array(A, B, 1, 1) + bracket(A, B))))
        lhs = diamond_array(A, diamond_array(B, xi, p, q), p, q) - diamond_array(B, diamond_array(A, xi, p, q), p, q)
        upd("homomorphism", np.max(np.abs(lhs - diamond_array(-bracket(A, B), xi, p, q))) / scale)
        k = int(rng.integers(2, 4))
        form = alternation(random_tensor(rng, n, 0, k))
        out = diamond_array(A, form, 0, k)
        upd("antisymmetry", np.max(np.abs(out - alternation(out))))
        upd("net_degree", np.max(np.abs(diamond_array(eye, xi, p, q) - (q - p) * xi)) / scale)
        S, _ = sym_skew_split(A)
        upd("metric", np.max(np.abs(diamond_array(A, eye, 0, 2) - 2 * S)))
        upd("volume", np.max(np.abs(diamond_array(A, vol, 0, n) - np.trace(A) * vol)))
        cx = diamond_array(D, xi, p, q)
        upd("skew_orthogonal", abs(np.vdot(cx, xi)) / (np.vdot(xi, xi) * np.max(np.abs(D))))
        ax = diamond_array(A, xi, p, q)
        upd("skew_adjoint", abs(np.vdot(ax, cx) + np.vdot(diamond_array(D, ax, p, q), xi))
            / (scale ** 2 * (1 + np.max(np.abs(A))) * (1 + np.max(np.abs(D)))))
    return res


def inner_product_constants(hm: HModel, trials: int = 100, seed: int = 0) -> dict[str, float]:
    """Measured <A.xi0, A.xi0>/<A, A> for random A in m (per summand for SU)."""
    from .torsion import pi_m_array

    rng = np.random.default_rng(seed)
    xs = [t.data for t in hm.xi0]
    specs = [(t.p, t.q, t.weight) for t in hm.xi0]
    worst = {}

    def ratio(A):
        num = sum(wt * np.sum(diamond_array(A, x, p, q) ** 2) for x, (p, q, wt) in zip(xs, specs))
        return num / np.sum(A * A)

    for _ in range(trials):
        W = rng.normal(size=(hm.n, hm.n))
        W = W - W.T
        A = pi_m_array(hm, xs, W, specs)
        if hm.single_c:
            worst.setdefault("c", []).append(ratio(A))
        else:
            J = xs[0]
            A1 = (np.sum(A * J) / np.sum(J * J)) * J
            A2 = A - A1
            worst.setdefault("lambda1", []).append(ratio(A1))
            worst.setdefault("lambda2", []).append(ratio(A2))
    return {k: (float(np.min(v)), float(np.max(v))) for k, v in worst.items()}
