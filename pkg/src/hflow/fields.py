"""Structure fields on flat periodic tori.

Field values are stored component-major, one array of shape
``(ncomp, N_1, ..., N_n)`` per model part.  Parts that are antisymmetric in
all their slots (forms, and the skew complex structure J) keep only the
components with increasing indices.
"""
from __future__ import annotations

import itertools
import math
import struct
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .algebra import DenseTensor, MultiTensor, alternating_residual, perm_sign
from .models import HKind, HModel, model

MAGIC = b"HSTF"
VERSION = 1

# dense bytes handed to one pointwise call
CHUNK_BYTES = 48 * 2 ** 20


@dataclass(frozen=True)
class PeriodicGrid:
    res: tuple[int, ...]
    side: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "res", tuple(int(r) for r in self.res))
        object.__setattr__(self, "side", tuple(float(s) for s in self.side))
        if len(self.res) != len(self.side) or len(self.res) < 1:
            raise ValueError("res and side must have one entry per axis")
        if min(self.res) < 4:
            raise ValueError(f"each axis needs at least 4 points, got {self.res}")
        if min(self.side) <= 0:
            raise ValueError("side lengths must be positive")

    @classmethod
    def cube(cls, n: int, N: int, L: float = 2 * math.pi) -> "PeriodicGrid":
        return cls((N,) * n, (L,) * n)

    @property
    def n(self) -> int:
        return len(self.res)

    @property
    def h(self) -> tuple[float, ...]:
        return tuple(L / N for L, N in zip(self.side, self.res))

    @property
    def npoints(self) -> int:
        return math.prod(self.res)

    @property
    def cell_volume(self) -> float:
        return math.prod(self.h)

    @property
    def volume(self) -> float:
        return math.prod(self.side)

    def axis_coords(self, l: int) -> np.ndarray:
        return np.arange(self.res[l]) * self.h[l]

    def coords(self) -> list[np.ndarray]:
        """Open-mesh coordinate arrays, broadcastable to ``res``."""
        out = []
        for l in range(self.n):
            shape = [1] * self.n
            shape[l] = self.res[l]
            out.append(self.axis_coords(l).reshape(shape))
        return out

    def scaled(self, lam: float) -> "PeriodicGrid":
        return PeriodicGrid(self.res, tuple(lam * L for L in self.side))


class PartLayout:
    """Dense <-> stored component maps for one part of a model tensor."""

    def __init__(self, t: DenseTensor):
        self.p, self.q, self.n = t.p, t.q, t.n
        self.k = k = t.p + t.q
        self.alt = k >= 2 and alternating_residual(t.data) == 0.0 and np.any(t.data)
        self.form = t.form
        n = self.n
        if self.alt:
            tuples = list(itertools.combinations(range(n), k))
            self.ncomp = len(tuples)
            self.weight = t.weight * math.factorial(k)
            src = np.zeros(n ** k, dtype=np.intp)
            sgn = np.zeros(n ** k)
            pick = np.zeros(self.ncomp, dtype=np.intp)
            strides = [n ** (k - 1 - i) for i in range(k)]
            for c, tup in enumerate(tuples):
                pick[c] = sum(i * s for i, s in zip(tup, strides))
                for perm in itertools.permutations(range(k)):
                    flat = sum(tup[perm[i]] * strides[i] for i in range(k))
                    src[flat] = c
                    sgn[flat] = perm_sign(perm)
            self._src, self._sgn, self._pick = src, sgn, pick
        else:
            self.ncomp = n ** k
            self.weight = t.weight

    def expand(self, c: np.ndarray) -> np.ndarray:
        """Stored components ``(ncomp,) + B`` to dense ``(n,)*k + B``."""
        B = c.shape[1:]
        if self.alt:
            d = c[self._src] * self._sgn.reshape((-1,) + (1,) * len(B))
        else:
            d = c
        return d.reshape((self.n,) * self.k + B)

    def compress(self, d: np.ndarray) -> np.ndarray:
        B = d.shape[self.k:]
        flat = d.reshape((self.n ** self.k,) + B)
        return flat[self._pick] if self.alt else flat

    @property
    def spec(self):
        return (self.p, self.q, 1.0 / math.factorial(self.q) if self.form else 1.0)


@lru_cache(maxsize=None)
def _layouts(kind: HKind) -> tuple[PartLayout, ...]:
    return tuple(PartLayout(t) for t in model(kind).xi0)


def layouts_for(hm: HModel) -> tuple[PartLayout, ...]:
    return _layouts(hm.kind)


def skew_pack(C: np.ndarray) -> np.ndarray:
    """(n, n) + B skew matrices to (n(n-1)/2,) + B upper-triangle entries."""
    n = C.shape[0]
    iu = np.triu_indices(n, 1)
    return C[iu[0], iu[1]]


def skew_unpack(v: np.ndarray, n: int) -> np.ndarray:
    iu = np.triu_indices(n, 1)
    C = np.zeros((n, n) + v.shape[1:])
    C[iu[0], iu[1]] = v
    C[iu[1], iu[0]] = -v
    return C


class StructureField:
    """A model-shaped multi-tensor at every point of a periodic grid."""

    def __init__(self, grid: PeriodicGrid, hm: HModel, values):
        if grid.n != hm.n:
            raise ValueError(f"grid dimension {grid.n} does not match model dimension {hm.n}")
        self.grid = grid
        self.model = hm
        self.layouts = layouts_for(hm)
        values = [np.ascontiguousarray(v, dtype=float) for v in values]
        if len(values) != len(self.layouts):
            raise ValueError("one value array per model part expected")
        for v, lay in zip(values, self.layouts):
            if v.shape != (lay.ncomp,) + grid.res:
                raise ValueError(f"value array of shape {v.shape}, expected {(lay.ncomp,) + grid.res}")
        self.values = values

    # construction
    @classmethod
    def constant(cls, grid: PeriodicGrid, hm: HModel, xi: MultiTensor | None = None) -> "StructureField":
        xi = hm.xi0 if xi is None else xi
        vals = []
        for lay, t in zip(layouts_for(hm), xi):
            c = lay.compress(t.data)
            vals.append(np.broadcast_to(c.reshape((-1,) + (1,) * grid.n), (lay.ncomp,) + grid.res).copy())
        return cls(grid, hm, vals)

    @classmethod
    def from_dense(cls, grid: PeriodicGrid, hm: HModel, parts) -> "StructureField":
        """``parts[i]`` has shape ``(n,)*k + grid.res``."""
        return cls(grid, hm, [lay.compress(d) for lay, d in zip(layouts_for(hm), parts)])

    def with_values(self, values) -> "StructureField":
        return StructureField(self.grid, self.model, values)

    def with_grid(self, grid: PeriodicGrid) -> "StructureField":
        return StructureField(grid, self.model, self.values)

    def copy(self) -> "StructureField":
        return self.with_values([v.copy() for v in self.values])

    # access
    @property
    def ncomp(self) -> int:
        return sum(lay.ncomp for lay in self.layouts)

    def flat_values(self) -> list[np.ndarray]:
        P = self.grid.npoints
        return [v.reshape(v.shape[0], P) for v in self.values]

    def dense(self, sl: slice = slice(None)) -> list[np.ndarray]:
        """Dense parts at the flattened points ``sl``."""
        return [lay.expand(v[:, sl]) for lay, v in zip(self.layouts, self.flat_values())]

    def at(self, index) -> MultiTensor:
        parts = []
        for lay, v, t in zip(self.layouts, self.values, self.model.xi0):
            parts.append(t.like(lay.expand(v[(slice(None),) + tuple(index)])))
        return MultiTensor(parts)

    def stacked(self) -> np.ndarray:
        return np.concatenate(self.flat_values(), axis=0)

    @classmethod
    def from_stacked(cls, grid: PeriodicGrid, hm: HModel, arr: np.ndarray) -> "StructureField":
        vals, start = [], 0
        for lay in layouts_for(hm):
            vals.append(arr[start:start + lay.ncomp].reshape((lay.ncomp,) + grid.res))
            start += lay.ncomp
        if start != arr.shape[0]:
            raise ValueError("component count does not match the model")
        return cls(grid, hm, vals)

    def pointwise_norm2(self, values=None) -> np.ndarray:
        """|xi|^2 (or of another stored-layout array list) at each point."""
        values = self.values if values is None else values
        out = np.zeros(self.grid.res)
        for lay, v in zip(self.layouts, values):
            out += lay.weight * np.einsum("c...,c...->...", v, v)
        return out

    def max_abs_diff(self, other: "StructureField") -> float:
        return max(float(np.max(np.abs(a - b))) for a, b in zip(self.values, other.values))


# ------------------------------------------------------------ finite differences


def diff(a: np.ndarray, axis: int, h: float, order: int = 2) -> np.ndarray:
    """Centered periodic first derivative along ``axis``."""
    if order == 2:
        return (np.roll(a, -1, axis) - np.roll(a, 1, axis)) / (2 * h)
    if order == 4:
        return (
            8 * (np.roll(a, -1, axis) - np.roll(a, 1, axis))
            - (np.roll(a, -2, axis) - np.roll(a, 2, axis))
        ) / (12 * h)
    raise ValueError(f"stencil order must be 2 or 4, got {order}")


def second_diff(a: np.ndarray, axis: int, h: float, order: int = 2) -> np.ndarray:
    """Centered periodic second derivative along ``axis``."""
    if order == 2:
        return (np.roll(a, -1, axis) - 2 * a + np.roll(a, 1, axis)) / (h * h)
    if order == 4:
        return (
            16 * (np.roll(a, -1, axis) + np.roll(a, 1, axis))
            - (np.roll(a, -2, axis) + np.roll(a, 2, axis))
            - 30 * a
        ) / (12 * h * h)
    raise ValueError(f"stencil order must be 2 or 4, got {order}")


def grid_diff(a: np.ndarray, grid: PeriodicGrid, l: int, order: int = 2) -> np.ndarray:
    """Derivative of a ``(..., *res)`` array along grid axis l."""
    if not 0 <= l < grid.n:
        raise ValueError(f"axis {l} out of range for a {grid.n}-dimensional grid")
    return diff(a, a.ndim - grid.n + l, grid.h[l], order)


def partial_derivative(field: StructureField, axis: int, order: int = 2) -> list[np.ndarray]:
    """Derivative along one grid axis in the field's stored layout."""
    return [grid_diff(v, field.grid, axis, order) for v in field.values]


def laplacian(field: StructureField, order: int = 2) -> list[np.ndarray]:
    g = field.grid
    out = []
    for v in field.values:
        acc = np.zeros_like(v)
        for l in range(g.n):
            acc += second_diff(v, v.ndim - g.n + l, g.h[l], order)
        out.append(acc)
    return out


def integrate(scalar: np.ndarray, grid: PeriodicGrid) -> float:
    """Rectangle-rule integral over the torus (exact for trigonometric polynomials below Nyquist)."""
    scalar = np.asarray(scalar)
    if scalar.shape != grid.res:
        raise ValueError(f"scalar field of shape {scalar.shape} on grid {grid.res}")
    return float(np.sum(scalar)) * grid.cell_volume


# ------------------------------------------------------------ pointwise sweeps


def chunk_size(field: StructureField, mult: int = 1) -> int:
    dense = sum(lay.n ** lay.k for lay in field.layouts) * 8 * max(1, mult)
    return max(1, CHUNK_BYTES // dense)


def apply_pointwise(field: StructureField, fn, extra=(), chunk: int | None = None, workers: int = 1,
                    mult: int = 1):
    """Map ``fn(dense_parts, *extra_chunks)`` over chunks of grid points.

    ``extra`` arrays carry the flattened point axis last.  ``fn`` returns one
    array (or a tuple of arrays) whose last axis is the chunk; the results are
    reassembled with the grid shape.  Chunk boundaries do not depend on
    ``workers``, so outputs are bitwise identical for any worker count.
    """
    P = field.grid.npoints
    chunk = chunk or chunk_size(field, mult)
    flat = field.flat_values()
    extra = [e.reshape(e.shape[:-field.grid.n] + (P,)) if e.shape[-field.grid.n:] == field.grid.res else e
             for e in extra]
    slices = [slice(a, min(a + chunk, P)) for a in range(0, P, chunk)]

    def run(sl):
        parts = [lay.expand(v[:, sl]) for lay, v in zip(field.layouts, flat)]
        return fn(parts, *[e[..., sl] for e in extra])

    if workers > 1 and len(slices) > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(run, slices))
    else:
        results = [run(sl) for sl in slices]
    single = not isinstance(results[0], tuple)
    if single:
        results = [(r,) for r in results]
    outs = []
    for j in range(len(results[0])):
        arr = np.concatenate([r[j] for r in results], axis=-1)
        outs.append(arr.reshape(arr.shape[:-1] + field.grid.res))
    return outs[0] if single else tuple(outs)


def pointwise_sup(scalar: np.ndarray) -> float:
    return float(np.max(scalar)) if scalar.size else 0.0


# ------------------------------------------------------------ checkpoints


def write_checkpoint(path, field: StructureField) -> Path:
    """Little-endian HSTF checkpoint: header, f64 payload, CRC32 of the payload."""
    path = Path(path)
    g = field.grid
    payload = np.ascontiguousarray(field.stacked(), dtype="<f8").tobytes()
    header = MAGIC + struct.pack("<III", VERSION, field.model.kind.code, g.n)
    header += struct.pack(f"<{g.n}I", *g.res)
    header += struct.pack(f"<{g.n}d", *g.side)
    header += struct.pack("<Q", field.ncomp)
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(payload)
        fh.write(struct.pack("<I", crc))
    tmp.replace(path)
    return path


class CheckpointError(ValueError):
    pass


def read_checkpoint(path) -> StructureField:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not an HSTF checkpoint")
    off = 4
    version, code, n = struct.unpack_from("<III", raw, off)
    off += 12
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    res = struct.unpack_from(f"<{n}I", raw, off)
    off += 4 * n
    side = struct.unpack_from(f"<{n}d", raw, off)
    off += 8 * n
    (ncomp,) = struct.unpack_from("<Q", raw, off)
    off += 8
    nbytes = 8 * ncomp * math.prod(res)
    payload = raw[off:off + nbytes]
    if len(payload) != nbytes or len(raw) != off + nbytes + 4:
        raise CheckpointError(f"{path}: truncated or oversized payload")
    (crc,) = struct.unpack_from("<I", raw, off + nbytes)
    if zlib.crc32(payload) & 0xFFFFFFFF != crc:
        raise CheckpointError(f"{path}: CRC mismatch")
    grid = PeriodicGrid(res, side)
    hm = model(HKind.from_code(code, n))
    arr = np.frombuffer(payload, dtype="<f8").reshape(ncomp, -1).astype(float)
    return StructureField.from_stacked(grid, hm, arr)


# ------------------------------------------------------------ slab-wise evaluation


def slab_map(grid: PeriodicGrid, hm: HModel, values_fn, fn, halo: int = 2, slab: int = 8):
    """Evaluate ``fn(field)`` slab by slab along axis 0 for grids too large to hold whole.

    ``values_fn(rows)`` returns the stored values at the (wrapped) axis-0 rows.
    Each slab is padded with ``halo`` rows on both sides so that stencils of
    half-width up to ``halo`` see true neighbours; ``fn`` returns one scalar
    density (or a tuple of them) on the padded slab and only the interior
    rows are kept.  The assembled densities have the shape ``grid.res``.
    """
    N0 = grid.res[0]
    if halo < 0 or slab < 1:
        raise ValueError("halo must be >= 0 and slab >= 1")
    pieces = []
    for start in range(0, N0, slab):
        stop = min(start + slab, N0)
        rows = np.arange(start - halo, stop + halo)
        sub = PeriodicGrid((len(rows),) + grid.res[1:], (len(rows) * grid.h[0],) + grid.side[1:])
        out = fn(StructureField(sub, hm, values_fn(rows)))
        single = not isinstance(out, tuple)
        out = (out,) if single else out
        pieces.append(tuple(np.asarray(o)[halo:halo + stop - start] for o in out))
    res = tuple(np.concatenate([p[j] for p in pieces], axis=0) for j in range(len(pieces[0])))
    return res[0] if single else res
