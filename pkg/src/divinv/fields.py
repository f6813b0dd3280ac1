"""Staggered (MAC) grid fields.

Scalars live at cell centers, component ``i`` of a vector field lives at the
centers of the faces normal to axis ``i``.  With this layout the discrete
divergence and gradient are exact negative adjoints of each other, which is
what makes ``div u == f`` checkable to solver tolerance.

A face carries a free value only if both adjacent cells belong to the
region; every other face is pinned to zero.  This encodes the zero trace of
``W^{1,q}_0`` fields on holes and on the outer boundary.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import BadExponent, EmptyRegion

AXES = (0, 1, 2)


@dataclass(frozen=True)
class Grid:
    """Uniform grid of cubic cells; ``origin`` is the lower corner of cell (0, 0, 0)."""

    origin: tuple[float, float, float]
    shape: tuple[int, int, int]
    h: float

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "shape", tuple(int(v) for v in self.shape))
        if self.h <= 0:
            raise ValueError("grid spacing must be positive")
        if min(self.shape) < 4:
            raise ValueError("grid needs at least 4 cells per axis")

    @classmethod
    def covering(cls, lo, hi, h: float, margin: int = 1, center=None, odd: bool = True) -> "Grid":
        """Smallest grid of spacing ``h`` covering ``[lo, hi]`` plus ``margin`` cells.

        The grid is centered on ``center`` (default: box center); with ``odd``
        the number of cells per axis is odd so that a cell center sits there.
        """
        lo, hi = np.asarray(lo, float), np.asarray(hi, float)
        c = 0.5 * (lo + hi) if center is None else np.asarray(center, float)
        half = np.maximum(c - lo, hi - c)
        n = np.ceil(2 * half / h - 1e-9).astype(int) + 2 * margin
        n = np.maximum(n, 4)
        if odd:
            n += (n % 2 == 0)
        else:
            n += (n % 2 == 1)
        origin = c - 0.5 * n * h
        return cls(tuple(origin), tuple(int(v) for v in n), float(h))

    @property
    def cell_volume(self) -> float:
        return self.h**3

    @property
    def ncells(self) -> int:
        return math.prod(self.shape)

    def axis_centers(self, axis: int) -> np.ndarray:
        return self.origin[axis] + (np.arange(self.shape[axis]) + 0.5) * self.h

    def axis_nodes(self, axis: int) -> np.ndarray:
        return self.origin[axis] + np.arange(self.shape[axis] + 1) * self.h

    def face_shape(self, axis: int) -> tuple[int, int, int]:
        s = list(self.shape)
        s[axis] += 1
        return tuple(s)

    def cell_coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return np.meshgrid(*(self.axis_centers(a) for a in AXES), indexing="ij")

    def cell_points(self) -> np.ndarray:
        return np.stack(self.cell_coords(), axis=-1)

    def face_coords(self, axis: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        ax = [self.axis_nodes(a) if a == axis else self.axis_centers(a) for a in AXES]
        return np.meshgrid(*ax, indexing="ij")

    def face_points(self, axis: int) -> np.ndarray:
        return np.stack(self.face_coords(axis), axis=-1)

    def cell_index(self, p) -> tuple[int, int, int]:
        """Index of the cell containing ``p`` (clipped to the grid)."""
        idx = np.floor((np.asarray(p, float) - np.array(self.origin)) / self.h).astype(int)
        return tuple(int(v) for v in np.clip(idx, 0, np.array(self.shape) - 1))

    def window(self, center, radius: float, pad: int = 1) -> tuple[slice, slice, slice]:
        """Cell index window covering the ball ``B(center, radius)`` plus ``pad`` cells."""
        c = np.asarray(center, float)
        lo = np.floor((c - radius - np.array(self.origin)) / self.h).astype(int) - pad
        hi = np.ceil((c + radius - np.array(self.origin)) / self.h).astype(int) + pad
        lo = np.clip(lo, 0, np.array(self.shape))
        hi = np.clip(hi, 0, np.array(self.shape))
        return tuple(slice(int(a), int(b)) for a, b in zip(lo, hi))

    def subgrid(self, window: Sequence[slice]) -> "Grid":
        origin = [self.origin[a] + window[a].start * self.h for a in AXES]
        shape = [window[a].stop - window[a].start for a in AXES]
        return Grid(tuple(origin), tuple(shape), self.h)


def face_window(window: Sequence[slice], axis: int) -> tuple[slice, slice, slice]:
    """Face index window matching a cell window (faces on both ends included)."""
    return tuple(
        slice(w.start, w.stop + 1) if a == axis else w for a, w in enumerate(window)
    )


def face_masks(cell_mask: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """A face is free iff both adjacent cells are in ``cell_mask``."""
    out = []
    for a in AXES:
        s = list(cell_mask.shape)
        s[a] += 1
        m = np.zeros(s, dtype=bool)
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        mid = [slice(None)] * 3
        lo[a], hi[a], mid[a] = slice(None, -1), slice(1, None), slice(1, -1)
        m[tuple(mid)] = cell_mask[tuple(lo)] & cell_mask[tuple(hi)]
        out.append(m)
    return tuple(out)


def cell_adjacent(face_sets: Sequence[np.ndarray]) -> np.ndarray:
    """Cells touching at least one flagged face."""
    nx, ny, nz = face_sets[0].shape
    out = np.zeros((nx - 1, ny, nz), dtype=bool)
    for a, f in enumerate(face_sets):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[a], hi[a] = slice(None, -1), slice(1, None)
        out |= f[tuple(lo)] | f[tuple(hi)]
    return out


@dataclass(frozen=True)
class DomainMasks:
    """Cell classification of a perforated domain on a grid."""

    grid: Grid
    omega: np.ndarray  # cell center inside the base domain
    hole_id: np.ndarray  # index of the hole containing the cell center, -1 otherwise

    @property
    def fluid(self) -> np.ndarray:
        return self.omega & (self.hole_id < 0)

    @property
    def holes(self) -> np.ndarray:
        return self.hole_id >= 0

    def hole_cells(self, n: int) -> np.ndarray:
        return self.hole_id == n


def domain_masks(dom, grid: Grid) -> DomainMasks:
    """Classify cell centers of ``grid`` against a validated perforated domain."""
    pts = grid.cell_points()
    omega = dom.base.contains(pts)
    hole_id = np.full(grid.shape, -1, dtype=np.int64)
    for reg in dom.regions:
        w = grid.window(reg.center, reg.hole_circumradius)
        local = reg.in_hole(pts[w])
        sub = hole_id[w]
        sub[local] = reg.index
    return DomainMasks(grid, omega, hole_id)


class ScalarField:
    """Cell-centered values restricted to a region; values outside the region are zero."""

    def __init__(self, grid: Grid, values, mask=None):
        self.grid = grid
        values = np.array(values, dtype=float)
        if values.shape != grid.shape:
            raise ValueError(f"scalar values shape {values.shape} != grid {grid.shape}")
        self.mask = np.ones(grid.shape, bool) if mask is None else np.asarray(mask, bool)
        values[~self.mask] = 0.0
        self.values = values

    @classmethod
    def zeros(cls, grid: Grid, mask=None) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape), mask)

    @classmethod
    def from_function(cls, grid: Grid, fn, mask=None) -> "ScalarField":
        return cls(grid, fn(*grid.cell_coords()), mask)

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy(), self.mask.copy())

    def with_values(self, values) -> "ScalarField":
        return ScalarField(self.grid, values, self.mask)

    def __add__(self, other):
        return self.with_values(self.values + other.values)

    def __sub__(self, other):
        return self.with_values(self.values - other.values)

    def __mul__(self, c: float):
        return self.with_values(self.values * c)

    __rmul__ = __mul__

    def integral(self) -> float:
        return float(np.sum(self.values[self.mask])) * self.grid.cell_volume

    def mean(self) -> float:
        n = int(self.mask.sum())
        if n == 0:
            raise EmptyRegion("empty region")
        return float(np.sum(self.values[self.mask])) / n


class VectorField:
    """Face-centered components; values on faces outside ``masks`` are zero."""

    def __init__(self, grid: Grid, comps, masks=None):
        self.grid = grid
        comps = [np.array(c, dtype=float) for c in comps]
        for a in AXES:
            if comps[a].shape != grid.face_shape(a):
                raise ValueError(f"component {a} has shape {comps[a].shape}")
        if masks is None:
            masks = tuple(np.ones(grid.face_shape(a), bool) for a in AXES)
        self.masks = tuple(np.asarray(m, bool) for m in masks)
        for a in AXES:
            comps[a][~self.masks[a]] = 0.0
        self.comps = tuple(comps)

    @classmethod
    def zeros(cls, grid: Grid, masks=None) -> "VectorField":
        return cls(grid, [np.zeros(grid.face_shape(a)) for a in AXES], masks)

    @classmethod
    def for_region(cls, grid: Grid, cell_mask) -> "VectorField":
        return cls.zeros(grid, face_masks(cell_mask))

    @classmethod
    def from_function(cls, grid: Grid, fn, masks=None) -> "VectorField":
        """``fn(x, y, z)`` returns the three components; each is sampled on its own faces."""
        comps = [np.asarray(fn(*grid.face_coords(a))[a], float) for a in AXES]
        return cls(grid, comps, masks)

    def copy(self) -> "VectorField":
        return VectorField(self.grid, [c.copy() for c in self.comps], self.masks)

    def with_comps(self, comps) -> "VectorField":
        return VectorField(self.grid, comps, self.masks)

    def __add__(self, other):
        return self.with_comps([a + b for a, b in zip(self.comps, other.comps)])

    def __sub__(self, other):
        return self.with_comps([a - b for a, b in zip(self.comps, other.comps)])

    def __mul__(self, c: float):
        return self.with_comps([a * c for a in self.comps])

    __rmul__ = __mul__

    def flat(self) -> np.ndarray:
        return np.concatenate([c.ravel() for c in self.comps])

    def max_abs(self) -> float:
        return max(float(np.max(np.abs(c))) if c.size else 0.0 for c in self.comps)

    def l2(self) -> float:
        """Euclidean norm of all face values (no volume weight)."""
        return float(np.sqrt(sum(np.sum(c * c) for c in self.comps)))


def _pair(a):
    lo = [slice(None)] * 3
    hi = [slice(None)] * 3
    lo[a], hi[a] = slice(None, -1), slice(1, None)
    return tuple(lo), tuple(hi)


def divergence_array(comps, h: float) -> np.ndarray:
    out = None
    for a in AXES:
        lo, hi = _pair(a)
        d = (comps[a][hi] - comps[a][lo]) / h
        out = d if out is None else out + d
    return out


def gradient_arrays(p: np.ndarray, h: float, masks) -> list[np.ndarray]:
    out = []
    for a in AXES:
        s = list(p.shape)
        s[a] += 1
        g = np.zeros(s)
        lo, hi = _pair(a)
        mid = [slice(None)] * 3
        mid[a] = slice(1, -1)
        g[tuple(mid)] = (p[hi] - p[lo]) / h
        g[~masks[a]] = 0.0
        out.append(g)
    return out


def discrete_divergence(u: VectorField, mask=None) -> ScalarField:
    """Per-cell sum of face differences over ``h``.

    Cells outside ``mask`` (default: all cells) are reported as zero.
    """
    return ScalarField(u.grid, divergence_array(u.comps, u.grid.h), mask)


def discrete_gradient(p: ScalarField, masks=None) -> VectorField:
    """Face differences of adjacent cell values over ``h``, on faces interior to ``p.mask``."""
    masks = face_masks(p.mask) if masks is None else masks
    return VectorField(p.grid, gradient_arrays(p.values, p.grid.h, masks), masks)


def cell_inner(a: ScalarField, b: ScalarField) -> float:
    m = a.mask & b.mask
    return float(np.sum(a.values[m] * b.values[m])) * a.grid.cell_volume


def face_inner(u: VectorField, v: VectorField) -> float:
    s = 0.0
    for a in AXES:
        m = u.masks[a] & v.masks[a]
        s += float(np.sum(u.comps[a][m] * v.comps[a][m]))
    return s * u.grid.cell_volume


def _check_q(q: float):
    if not (q > 1) or not math.isfinite(q):
        raise BadExponent(f"BadExponent: q must be in (1, inf), got {q}")


def lq_norm(f, q: float) -> float:
    """Midpoint-rule ``L^q`` norm over the masked entries.

    For vector fields the components are combined in the ``l^q`` sense,
    ``(sum_i sum_faces |u_i|^q V)^(1/q)``; this equals the Euclidean form at q = 2.
    """
    _check_q(q)
    V = f.grid.cell_volume
    if isinstance(f, ScalarField):
        s = np.sum(np.abs(f.values[f.mask]) ** q)
    else:
        s = sum(np.sum(np.abs(c[m]) ** q) for c, m in zip(f.comps, f.masks))
    return float(s * V) ** (1.0 / q)


def gradient_quotients(u: VectorField) -> list[np.ndarray]:
    """The nine staggered difference quotients ``d_j u_i`` (all in-array neighbours)."""
    out = []
    h = u.grid.h
    for c in u.comps:
        for a in AXES:
            out.append(np.diff(c, axis=a) / h)
    return out


def w1q_seminorm(u: VectorField, q: float) -> float:
    """``L^q`` norm of the nine difference quotients, i.e. the discrete ``||grad u||_q``."""
    _check_q(q)
    s = sum(np.sum(np.abs(d) ** q) for d in gradient_quotients(u))
    return float(s * u.grid.cell_volume) ** (1.0 / q)


def zero_mean_project(f: ScalarField, region=None) -> ScalarField:
    """Subtract the mean over ``region`` (default ``f.mask``) on that region."""
    region = f.mask if region is None else np.asarray(region, bool)
    n = int(region.sum())
    if n == 0:
        raise EmptyRegion("EmptyRegion: cannot project onto an empty region")
    vals = f.values.copy()
    vals[region] -= np.sum(vals[region]) / n
    return ScalarField(f.grid, vals, f.mask | region)


def extend_by_zero(f: ScalarField, omega_mask) -> ScalarField:
    """Zero extension from the fluid region to the whole base domain."""
    omega_mask = np.asarray(omega_mask, bool)
    vals = np.where(f.mask, f.values, 0.0)
    return ScalarField(f.grid, vals, omega_mask)


def restrict(f: ScalarField, mask) -> ScalarField:
    return ScalarField(f.grid, f.values, np.asarray(mask, bool) & f.mask)


# -- file formats -------------------------------------------------------------

MAGIC = "DIVINV-FIELD"


def write_field(path, field) -> None:
    """``DIVINV-FIELD v1 <scalar|vector> nx ny nz h`` then little-endian float64, x fastest."""
    g = field.grid
    kind = "scalar" if isinstance(field, ScalarField) else "vector"
    header = f"{MAGIC} v1 {kind} {g.shape[0]} {g.shape[1]} {g.shape[2]} {g.h!r}\n"
    blocks = [field.values] if kind == "scalar" else list(field.comps)
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        for b in blocks:
            fh.write(np.asarray(b, dtype="<f8").ravel(order="F").tobytes())


def read_field(path, origin=(0.0, 0.0, 0.0)):
    """Read a field file; the grid origin is not stored and defaults to ``origin``."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        data = fh.read()
    if len(header) != 7 or header[0] != MAGIC or header[1] != "v1":
        raise ValueError(f"not a {MAGIC} v1 file: {path}")
    kind = header[2]
    shape = tuple(int(v) for v in header[3:6])
    grid = Grid(origin, shape, float(header[6]))
    arr = np.frombuffer(data, dtype="<f8")
    if kind == "scalar":
        if arr.size != grid.ncells:
            raise ValueError("truncated scalar field")
        return ScalarField(grid, arr.reshape(shape, order="F"))
    sizes = [math.prod(grid.face_shape(a)) for a in AXES]
    if arr.size != sum(sizes):
        raise ValueError("truncated vector field")
    comps, k = [], 0
    for a in AXES:
        comps.append(arr[k:k + sizes[a]].reshape(grid.face_shape(a), order="F"))
        k += sizes[a]
    return VectorField(grid, comps)


def norms_csv(rows: Sequence[tuple[str, float, float]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "q", "value"])
    for name, q, value in rows:
        w.writerow([name, repr(float(q)), repr(float(value))])
    return buf.getvalue()


__all__ = [
    "Grid", "ScalarField", "VectorField", "DomainMasks", "domain_masks", "face_masks",
    "cell_adjacent", "discrete_divergence", "discrete_gradient", "cell_inner", "face_inner",
    "lq_norm", "w1q_seminorm", "gradient_quotients", "zero_mean_project", "extend_by_zero",
    "write_field", "read_field", "norms_csv",
]
