"""Right inverses of the discrete divergence with zero trace.

Two backends:

* ``min_energy``: the field of least gradient energy with ``div u = f``,
  computed by conjugate gradients on the pressure Schur complement
  (Uzawa iteration).  Inner vector-Laplacian solves are exact: sine
  transforms when the free faces fill a box, a sparse LU factorization for
  small masked regions, algebraic-multigrid CG for large ones.
* ``integral``: the classical Bogovskii singular integral on a region that
  is star-shaped with respect to a ball, sampled at face centers.

``local_solve_E`` / ``local_solve_F`` apply the min-energy backend on the
small regions around one hole and embed the result back by zero extension.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import ndimage

from .errors import (
    EmptyRegion,
    MeanNotZero,
    NonConvergence,
    NotStarShaped,
    RegionNotConnected,
    ResidualTooLarge,
    UnderResolved,
)
from .fields import (
    AXES,
    Grid,
    ScalarField,
    VectorField,
    divergence_array,
    face_masks,
    face_window,
    gradient_arrays,
    lq_norm,
    w1q_seminorm,
)
from .kernel import StarWeight, bogovskii_sum

log = logging.getLogger(__name__)

DIRECT_LIMIT = 20000  # unknowns per component handled by sparse LU
MAX_OUTER = 500


@dataclass
class DivSolveProblem:
    region: np.ndarray
    rhs: ScalarField
    q_report: float = 2.0
    tol: float = 1e-6
    backend: str = "min_energy"
    star_center: tuple | None = None
    star_radius: float | None = None


@dataclass
class DivSolveSolution:
    u: VectorField
    residual: float
    iterations: int
    norms: dict
    info: dict = field(default_factory=dict)


# -- inner solvers --------------------------------------------------------------

def _box_of(mask: np.ndarray):
    """Slices of ``mask``'s bounding box if the mask fills it, else None."""
    if not mask.any():
        return None
    idx = np.nonzero(mask)
    win = tuple(slice(int(i.min()), int(i.max()) + 1) for i in idx)
    return win if mask[win].all() else None


class _SineSolver:
    """Dirichlet Laplacian on a full box of unknowns, diagonalized by DST-I."""

    def __init__(self, window, h: float):
        self.window = window
        n = [w.stop - w.start for w in window]
        lam = [2.0 - 2.0 * np.cos(np.pi * np.arange(1, m + 1) / (m + 1)) for m in n]
        self.eig = (lam[0][:, None, None] + lam[1][None, :, None] + lam[2][None, None, :]) / h**2

    def solve(self, b: np.ndarray) -> np.ndarray:
        out = np.zeros_like(b)
        rhs = b[self.window]
        out[self.window] = sfft.idstn(sfft.dstn(rhs, type=1) / self.eig, type=1)
        return out


class _SparseSolver:
    """Masked Dirichlet Laplacian assembled explicitly; LU or AMG-CG."""

    def __init__(self, mask: np.ndarray, h: float, method: str = "auto"):
        self.mask = mask
        n = int(mask.sum())
        index = np.full(mask.shape, -1, dtype=np.int64)
        index[mask] = np.arange(n)
        rows, cols = [], []
        diag = np.zeros(n)
        pos = np.nonzero(mask)
        for a in AXES:
            for step in (-1, 1):
                nb = [p.copy() for p in pos]
                nb[a] = nb[a] + step
                inside = (nb[a] >= 0) & (nb[a] < mask.shape[a])
                diag += inside
                j = np.full(n, -1, dtype=np.int64)
                j[inside] = index[tuple(c[inside] for c in nb)]
                keep = j >= 0
                rows.append(np.nonzero(keep)[0])
                cols.append(j[keep])
        r = np.concatenate(rows + [np.arange(n)])
        c = np.concatenate(cols + [np.arange(n)])
        v = np.concatenate([-np.ones(sum(len(x) for x in rows)), diag]) / h**2
        self.A = sp.csc_matrix((v, (r, c)), shape=(n, n))
        if method == "auto":
            method = "lu" if n <= DIRECT_LIMIT else "amg"
        self.method = method
        if method == "lu":
            self._lu = spla.splu(self.A)
        elif method == "amg":
            import pyamg

            self._ml = pyamg.smoothed_aggregation_solver(self.A.tocsr(), symmetry="symmetric")
        elif method == "cg":
            self._dinv = 1.0 / self.A.diagonal()
        else:
            raise ValueError(f"unknown inner method {method!r}")
        self.inner_tol = 1e-13

    def solve(self, b: np.ndarray) -> np.ndarray:
        out = np.zeros_like(b)
        rhs = b[self.mask]
        if not rhs.any():
            return out
        if self.method == "lu":
            x = self._lu.solve(rhs)
        elif self.method == "amg":
            x = self._ml.solve(rhs, tol=self.inner_tol, accel="cg", maxiter=200)
        else:
            M = sp.diags(self._dinv)
            x, _ = spla.cg(self.A, rhs, rtol=self.inner_tol, atol=0.0, M=M, maxiter=20 * len(rhs))
        out[self.mask] = x
        return out


class VectorLaplacian:
    """Inverse of the componentwise Dirichlet Laplacian on the free faces."""

    def __init__(self, masks, h: float, inner: str = "auto"):
        self.masks = masks
        self.solvers = []
        for m in masks:
            box = _box_of(m) if inner == "auto" else None
            if box is not None:
                self.solvers.append(_SineSolver(box, h))
            else:
                self.solvers.append(_SparseSolver(m, h, inner))

    def set_inner_tol(self, tol: float):
        for s in self.solvers:
            if isinstance(s, _SparseSolver):
                s.inner_tol = tol

    def solve(self, comps):
        return [s.solve(c) for s, c in zip(self.solvers, comps)]


# -- checks ---------------------------------------------------------------------

def check_region(region: np.ndarray):
    if not region.any():
        raise EmptyRegion("EmptyRegion: region has no cells")
    _, count = ndimage.label(region)
    if count != 1:
        raise RegionNotConnected(f"region has {count} face-connected components")


def check_mean(f: np.ndarray, region: np.ndarray, rel: float = 1e-12):
    vals = f[region]
    rms = float(np.sqrt(np.mean(vals * vals))) if vals.size else 0.0
    mean = float(np.mean(vals)) if vals.size else 0.0
    if abs(mean) > rel * max(rms, 1e-300) and rms > 0:
        raise MeanNotZero(f"MeanNotZero: mean {mean:.3e} vs rms {rms:.3e}")


def _rhs_array(f: ScalarField, region: np.ndarray) -> np.ndarray:
    outside = f.values[~region]
    if outside.size and np.any(outside != 0):
        raise ValueError("right-hand side is nonzero outside the region")
    return np.where(region, f.values, 0.0)


def _report(u: VectorField, q: float) -> dict:
    return {"lq": lq_norm(u, q), "grad_lq": w1q_seminorm(u, q), "grad_l2": w1q_seminorm(u, 2.0)}


def divergence_residual(u: VectorField, f: ScalarField, region) -> float:
    """``||div u - f||_2 / ||f||_2`` over ``region`` (0 when f = 0 and div u = 0)."""
    d = divergence_array(u.comps, u.grid.h)
    r = (d - f.values)[region]
    fn = float(np.linalg.norm(f.values[region]))
    rn = float(np.linalg.norm(r))
    if fn == 0:
        return 0.0 if rn == 0 else float("inf")
    return rn / fn


# -- min-energy backend --------------------------------------------------------

def _uzawa_cg(lap: VectorLaplacian, masks, region, h, f, tol, max_iter):
    comps = [np.zeros(m.shape) for m in masks]
    fnorm = float(np.linalg.norm(f))
    if fnorm == 0.0:
        return comps, 0.0, 0
    n = int(region.sum())

    def project(r):
        r = np.where(region, r, 0.0)
        r[region] -= r[region].sum() / n
        return r

    r = project(f.copy())
    p = r.copy()
    rr = float(np.vdot(r, r))
    it = 0
    res = np.sqrt(rr) / fnorm
    while it < max_iter:
        it += 1
        g = gradient_arrays(p, h, masks)
        w = lap.solve([-x for x in g])
        Sp = divergence_array(w, h)
        pSp = float(np.vdot(p, Sp))
        if pSp <= 0:
            break
        a = rr / pSp
        for c, wc in zip(comps, w):
            c += a * wc
        r = project(r - a * Sp)
        rr_new = float(np.vdot(r, r))
        res = np.sqrt(rr_new) / fnorm
        if res <= tol:
            true = project(f - divergence_array(comps, h))
            res = float(np.linalg.norm(true)) / fnorm
            if res <= tol:
                break
            r = true
            p = r.copy()
            rr = float(np.vdot(r, r))
            continue
        p = r + (rr_new / rr) * p
        rr = rr_new
    true = f - divergence_array(comps, h)
    res = float(np.linalg.norm(true[region])) / fnorm
    return comps, res, it


def min_energy_rightinverse(region, f: ScalarField, tol: float = 1e-6, q_report: float = 2.0,
                            max_iter: int = MAX_OUTER, inner: str = "auto",
                            lap: VectorLaplacian | None = None) -> DivSolveSolution:
    """``argmin ||grad u||_2`` subject to ``div u = f`` and ``u = 0`` off the region faces."""
    region = np.asarray(region, bool)
    check_region(region)
    rhs = _rhs_array(f, region)
    check_mean(rhs, region)
    masks = face_masks(region)
    if lap is None:
        lap = VectorLaplacian(masks, f.grid.h, inner)
    lap.set_inner_tol(min(1e-13, tol * 1e-3))
    comps, res, it = _uzawa_cg(lap, masks, region, f.grid.h, rhs, tol, max_iter)
    u = VectorField(f.grid, comps, masks)
    if res > tol:
        raise NonConvergence(
            f"NonConvergence: divergence residual {res:.3e} > tol {tol:.1e} after {it} iterations"
        )
    return DivSolveSolution(u, res, it, _report(u, q_report), {"backend": "min_energy"})


# -- integral backend ---------------------------------------------------------

def _star_points(center, radius):
    dirs = [np.zeros(3)]
    for a in AXES:
        for s in (-1.0, 1.0):
            e = np.zeros(3)
            e[a] = s
            dirs.append(e)
    for sx in (-1, 1):
        for sy in (-1, 1):
            for sz in (-1, 1):
                dirs.append(np.array([sx, sy, sz]) / np.sqrt(3.0))
    return np.asarray(center, float) + 0.999 * radius * np.array(dirs)


def check_star_shaped(grid: Grid, region: np.ndarray, center, radius: float, samples: int | None = None):
    """Segments from region cell centers to points of the star ball stay in the region."""
    pts = grid.cell_points()[region]
    star = _star_points(center, radius)
    ci = grid.cell_index(center)
    if not region[ci]:
        raise NotStarShaped("NotStarShaped: star center is outside the region")
    n = samples or 2 * max(grid.shape)
    t = np.linspace(0.0, 1.0, n)
    origin = np.array(grid.origin)
    for s in star:
        seg = pts[:, None, :] + t[None, :, None] * (s - pts)[:, None, :]
        idx = np.floor((seg - origin) / grid.h).astype(int)
        idx = np.clip(idx, 0, np.array(grid.shape) - 1)
        if not region[idx[..., 0], idx[..., 1], idx[..., 2]].all():
            raise NotStarShaped("NotStarShaped: a segment to the star ball leaves the region")


def bogovskii_integral(region, f: ScalarField, star_center, star_radius: float, tol: float = 1e-6,
                       q_report: float = 2.0, levels: int = 2, correct: bool = True,
                       max_iter: int = MAX_OUTER) -> DivSolveSolution:
    """Bogovskii singular integral sampled at free face centers.

    The sampled field satisfies ``div u = f`` only up to quadrature and
    sampling error (``info['raw_residual']``).  With ``correct`` the remaining
    discrete residual is removed by a min-energy right inverse of it, which
    makes the result an exact discrete right inverse; without it a residual
    above ``tol`` raises ResidualTooLarge.
    """
    region = np.asarray(region, bool)
    if not 0 <= levels <= 3:
        raise ValueError("refinement levels are capped at 3")
    check_region(region)
    grid = f.grid
    rhs = _rhs_array(f, region)
    check_mean(rhs, region)
    check_star_shaped(grid, region, star_center, star_radius)
    masks = face_masks(region)
    src = rhs != 0
    sources = grid.cell_points()[src]
    masses = rhs[src] * grid.cell_volume
    weight = StarWeight(star_center, star_radius)
    comps = []
    for a in AXES:
        c = np.zeros(grid.face_shape(a))
        pts = grid.face_points(a)[masks[a]]
        c[masks[a]] = bogovskii_sum(weight, pts, sources, masses, grid.h, a, levels=levels)
        comps.append(c)
    u = VectorField(grid, comps, masks)
    fs = ScalarField(grid, rhs, region)
    raw = divergence_residual(u, fs, region)
    info = {"backend": "integral", "raw_residual": raw, "levels": levels}
    iters = 0
    if correct and raw > 0:
        r = rhs - divergence_array(u.comps, grid.h)
        r = np.where(region, r, 0.0)
        r[region] -= r[region].mean()
        fix = min_energy_rightinverse(region, ScalarField(grid, r, region), tol=min(tol, 1e-10) * 1e-2,
                                      max_iter=max_iter)
        u = u + fix.u
        iters = fix.iterations
        info["correction_grad_l2"] = fix.norms["grad_l2"]
    res = divergence_residual(u, fs, region)
    if res > tol:
        raise ResidualTooLarge(f"ResidualTooLarge: {res:.3e} > tol {tol:.1e}")
    return DivSolveSolution(u, res, iters, _report(u, q_report), info)


def solve(problem: DivSolveProblem) -> DivSolveSolution:
    if problem.backend in ("min_energy", "minenergy"):
        return min_energy_rightinverse(problem.region, problem.rhs, problem.tol, problem.q_report)
    if problem.backend == "integral":
        return bogovskii_integral(problem.region, problem.rhs, problem.star_center, problem.star_radius,
                                  problem.tol, problem.q_report)
    raise ValueError(f"unknown backend {problem.backend!r}")


# -- local solves around one hole --------------------------------------------

def local_region(masks, center, radius: float) -> np.ndarray:
    """Fluid cells whose centers lie within ``radius + h/2`` of ``center``.

    Every cell adjacent to a face strictly inside ``B(center, radius)`` is
    included, so a field supported on such faces has its divergence there.
    """
    g = masks.grid
    win = g.window(center, radius + g.h, pad=1)
    out = np.zeros(g.shape, bool)
    pts = g.cell_points()[win]
    near = np.linalg.norm(pts - np.asarray(center), axis=-1) < radius + 0.5 * g.h
    out[win] = near & masks.fluid[win]
    return out


def solve_on_window(region: np.ndarray, rhs: ScalarField, tol: float, q_report: float = 2.0,
                    max_iter: int = MAX_OUTER) -> DivSolveSolution:
    """Min-energy solve on the bounding box of ``region`` (plus a margin), embedded back."""
    grid = rhs.grid
    if not region.any():
        raise EmptyRegion("EmptyRegion: local region is empty")
    idx = np.nonzero(region)
    span = [int(i.max() - i.min() + 1) for i in idx]
    if min(span) < 4:
        raise UnderResolved(f"UnderResolved: local region spans {span} cells (< 4)")
    win = tuple(
        slice(max(int(i.min()) - 2, 0), min(int(i.max()) + 3, n)) for i, n in zip(idx, grid.shape)
    )
    sub = grid.subgrid(win)
    sreg = region[win]
    sf = ScalarField(sub, np.where(region, rhs.values, 0.0)[win], sreg)
    sol = min_energy_rightinverse(sreg, sf, tol, q_report, max_iter=max_iter)
    comps = []
    masks = face_masks(region)
    for a in AXES:
        c = np.zeros(grid.face_shape(a))
        c[face_window(win, a)] = sol.u.comps[a]
        comps.append(c)
    u = VectorField(grid, comps, masks)
    return DivSolveSolution(u, sol.residual, sol.iterations, _report(u, q_report),
                            {"backend": "min_energy", "window": [(w.start, w.stop) for w in win],
                             "cells": int(sreg.sum())})


def _local(dom, masks, n: int, rhs: ScalarField, radius: float, tol: float, q_report: float):
    reg = dom.regions[n]
    region = local_region(masks, reg.center, radius)
    vals = np.where(region, rhs.values, 0.0)
    if np.any(vals[region]):
        vals[region] -= vals[region].mean()
    else:
        return DivSolveSolution(VectorField.for_region(rhs.grid, region), 0.0, 0,
                                {"lq": 0.0, "grad_lq": 0.0, "grad_l2": 0.0}, {"cells": int(region.sum())})
    return solve_on_window(region, ScalarField(rhs.grid, vals, region), tol, q_report)


def local_solve_E(dom, n: int, rhs: ScalarField, masks, tol: float = 1e-10, q_report: float = 2.0):
    """Right inverse on ``E_n = B(x_n, delta2 eps) minus T_n`` (discretely: cells within delta2 eps + h/2)."""
    return _local(dom, masks, n, rhs, dom.regions[n].d_outer, tol, q_report)


def local_solve_F(dom, n: int, rhs: ScalarField, masks, tol: float = 1e-10, q_report: float = 2.0):
    """Right inverse on ``F_n = B(x_n, delta0 eps^alpha) minus T_n``."""
    return _local(dom, masks, n, rhs, dom.regions[n].f_outer, tol, q_report)
