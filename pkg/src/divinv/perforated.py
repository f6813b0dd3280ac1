"""Restriction operator and the perforated-domain right inverse.

For a field ``u`` on the base domain with ``div u`` vanishing on the holes,

    R(u) = u - sum_n (b_n - B_E(div b_n)) - sum_n (beta_n - B_F(div beta_n)),
    b_n = chi_n (u - m_n),   beta_n = phi_n m_n,   m_n = mean of u over D_n,

vanishes on the holes and keeps ``div R(u) = div u`` on the fluid.  The
perforated right inverse is ``R(B_Omega(extend_by_zero(f)))``.

On the grid the identity ``R(u) = 0`` on hole faces is exact up to rounding
once both cutoffs equal 1 on every face touching a hole cell.  ``discretize``
therefore keeps as hole cells only those whose center lies in the hole and
whose six face centers lie in the phi plateau (an inner staircase).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .cutoffs import CutoffSet
from .divsolve import (
    DivSolveSolution,
    bogovskii_integral,
    check_mean,
    divergence_residual,
    local_region,
    min_energy_rightinverse,
    solve_on_window,
)
from .errors import CompatibilityViolated, ResidualTooLarge, UnderResolved
from .fields import (
    AXES,
    DomainMasks,
    Grid,
    ScalarField,
    VectorField,
    divergence_array,
    domain_masks,
    face_masks,
    lq_norm,
    w1q_seminorm,
)

log = logging.getLogger(__name__)

DEFAULT_CAP = 96**3
COMPAT_REL = 1e-10  # |int_E div b| <= COMPAT_REL * ||grad u||_2 * |E|^(1/2)
TRACE_REL = 1e-10  # hole faces before clamping: <= TRACE_REL * ||u||_inf


def resolution_h(dom, cells_per_feature: int = 3) -> float:
    """Grid spacing putting ``cells_per_feature`` cells across the smallest feature.

    Features: the smallest hole diameter ``2 rho eps^alpha`` (rho the
    smallest hole inradius) and the annulus width ``(delta2 - delta1) eps``.
    """
    cfg = dom.config
    feats = [(cfg.delta2 - cfg.delta1) * cfg.epsilon]
    feats += [2 * reg.shape.inradius * reg.scale for reg in dom.regions]
    return min(feats) / cells_per_feature


def planned_cells(dom, h: float) -> int:
    lo, hi = dom.base.bounds
    return math.prod(Grid.covering(lo, hi, h, center=dom.base.center).shape)


@dataclass
class Discretization:
    """A perforated domain on a grid, with grid-adapted cutoffs and local regions."""

    dom: object
    grid: Grid
    masks: DomainMasks
    cutoffs: CutoffSet
    D: list  # per-hole annulus cell masks
    E: list  # per-hole local region masks
    F: list

    @property
    def fluid(self) -> np.ndarray:
        return self.masks.fluid

    @property
    def omega(self) -> np.ndarray:
        return self.masks.omega


def _face_radius(grid: Grid, idx: np.ndarray, center) -> np.ndarray:
    """Largest distance from ``center`` to the six face centers of each listed cell."""
    pts = np.array(grid.origin) + (idx + 0.5) * grid.h
    far = np.zeros(len(idx))
    for a in AXES:
        for s in (-0.5, 0.5):
            q = pts.copy()
            q[:, a] += s * grid.h
            far = np.maximum(far, np.linalg.norm(q - center, axis=1))
    return far


def trim_holes(masks: DomainMasks, cutoffs: CutoffSet) -> DomainMasks:
    """Drop hole cells with a face center outside the phi plateau of their hole."""
    hole_id = masks.hole_id.copy()
    for n in range(len(cutoffs)):
        idx = np.argwhere(hole_id == n)
        if idx.size:
            # a face at a * (1 + 1e-9) still evaluates phi to exactly 1.0
            out = _face_radius(masks.grid, idx, cutoffs.centers[n]) > cutoffs.phi[n].a * (1 + 1e-9)
            hole_id[tuple(idx[out].T)] = -1
    return DomainMasks(masks.grid, masks.omega, hole_id)


def discretize(dom, h: float | None = None, cells_per_feature: int = 3,
               max_cells: int = DEFAULT_CAP) -> Discretization:
    """Grid, masks, cutoffs and local regions for a validated domain.

    Raises UnderResolved when the grid exceeds ``max_cells``, a hole keeps
    no cell, the annulus is thinner than 3 cells, or discrete local regions
    touch each other or the boundary.
    """
    if h is None:
        h = resolution_h(dom, cells_per_feature)
    lo, hi = dom.base.bounds
    grid = Grid.covering(lo, hi, h, center=dom.base.center)
    if grid.ncells > max_cells:
        raise UnderResolved(
            f"UnderResolved: grid {grid.shape} has {grid.ncells} cells > cap {max_cells}"
        )
    cfg = dom.config
    if dom.regions and (cfg.delta2 - cfg.delta1) * cfg.epsilon / h < 3 - 1e-9:
        raise UnderResolved("UnderResolved: annulus D is resolved by fewer than 3 cells radially")
    cutoffs = CutoffSet.build(dom)
    masks = trim_holes(domain_masks(dom, grid), cutoffs)
    for reg in dom.regions:
        if not masks.hole_cells(reg.index).any():
            raise UnderResolved(f"UnderResolved: hole {reg.index} keeps no cell on this grid")
    pts = grid.cell_points()
    D, E, F = [], [], []
    owner = np.full(grid.shape, -1)
    for reg in dom.regions:
        rc = np.linalg.norm(pts - reg.center, axis=-1)
        # cells on the D radii (frequent, h divides the annulus width) are excluded on
        # both sides so that D keeps the symmetry of the grid about x_n
        D.append(masks.fluid & (rc > reg.d_inner * (1 + 1e-9)) & (rc < reg.d_outer * (1 - 1e-9)))
        e = local_region(masks, reg.center, reg.d_outer)
        e_all = e | masks.hole_cells(reg.index)
        if np.any(owner[e_all] >= 0):
            raise UnderResolved(f"UnderResolved: discrete local region of hole {reg.index} touches another")
        if np.any(~masks.omega[e_all]):
            raise UnderResolved(f"UnderResolved: local region of hole {reg.index} leaves the base domain")
        owner[e_all] = reg.index
        E.append(e)
        F.append(local_region(masks, reg.center, reg.f_outer))
    return Discretization(dom, grid, masks, cutoffs, D, E, F)


# -- correctors ---------------------------------------------------------------

def cell_average(u: VectorField) -> np.ndarray:
    """Face values averaged to cell centers, shape ``grid.shape + (3,)``."""
    out = []
    for a in AXES:
        c = u.comps[a]
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[a], hi[a] = slice(None, -1), slice(1, None)
        out.append(0.5 * (c[tuple(lo)] + c[tuple(hi)]))
    return np.stack(out, axis=-1)


def annulus_mean(u: VectorField, disc: Discretization, n: int) -> np.ndarray:
    """Componentwise mean of ``u`` over the cells of ``D_n``."""
    reg = disc.dom.regions[n]
    if (reg.d_outer - reg.d_inner) / disc.grid.h < 3 - 1e-9:
        raise UnderResolved("UnderResolved: annulus D is resolved by fewer than 3 cells radially")
    mask = disc.D[n]
    if not mask.any():
        raise UnderResolved(f"UnderResolved: annulus of hole {n} has no cells")
    return cell_average(u)[mask].mean(axis=0)


@dataclass
class HoleCorrection:
    index: int
    mean: np.ndarray
    b: VectorField
    beta: VectorField
    e: VectorField
    f: VectorField
    compat_E: float
    compat_F: float
    info: dict = field(default_factory=dict)


@dataclass
class CorrectorSet:
    holes: list
    omega_masks: tuple

    def total(self, grid: Grid) -> VectorField:
        """``sum_n (b_n - e_n) + (beta_n - f_n)``, summed in hole order."""
        acc = [np.zeros(grid.face_shape(a)) for a in AXES]
        for hc in self.holes:
            for a in AXES:
                acc[a] += (hc.b.comps[a] - hc.e.comps[a]) + (hc.beta.comps[a] - hc.f.comps[a])
        return VectorField(grid, acc, self.omega_masks)


def _profile_on_faces(profile, center, grid: Grid, reach: float):
    """Profile values on all faces within ``reach`` of ``center`` (zero elsewhere)."""
    win = grid.window(center, reach, pad=1)
    out = []
    for a in AXES:
        vals = np.zeros(grid.face_shape(a))
        fw = tuple(slice(w.start, w.stop + 1) if k == a else w for k, w in enumerate(win))
        pts = grid.face_points(a)[fw]
        vals[fw] = profile(np.linalg.norm(pts - center, axis=-1))
        out.append(vals)
    return out


def _check_support(vals, masks, n):
    for a in AXES:
        if np.any((vals[a] != 0) & ~masks[a]):
            raise UnderResolved(f"UnderResolved: cutoff support of hole {n} reaches a pinned face")


def _local_solve(region, div_vals, grid, tol):
    vals = np.where(region, div_vals, 0.0)
    if not np.any(vals):
        return VectorField.for_region(grid, region), {"iterations": 0, "residual": 0.0}
    vals[region] -= vals[region].mean()
    sol = solve_on_window(region, ScalarField(grid, vals, region), tol)
    return sol.u, {"iterations": sol.iterations, "residual": sol.residual}


def build_correctors(u: VectorField, disc: Discretization, local_tol: float = 1e-10) -> CorrectorSet:
    """Correctors ``b_n``, ``beta_n`` and their local fixes ``e_n``, ``f_n`` for every hole.

    Raises CompatibilityViolated when ``int_E div b_n`` or ``int_F div beta_n``
    is not negligible, i.e. when ``div u`` does not vanish on the holes.
    """
    grid = disc.grid
    om = face_masks(disc.omega)
    grad_u = w1q_seminorm(u, 2.0)
    holes = []
    for reg in disc.dom.regions:
        n = reg.index
        m = annulus_mean(u, disc, n)
        chi = _profile_on_faces(disc.cutoffs.chi[n], reg.center, grid, reg.d_outer)
        phi = _profile_on_faces(disc.cutoffs.phi[n], reg.center, grid, reg.f_outer)
        # supports must sit on free faces of the base domain
        _check_support(chi, om, n)
        b = VectorField(grid, [chi[a] * (u.comps[a] - m[a]) for a in AXES], om)
        beta = VectorField(grid, [phi[a] * m[a] for a in AXES], om)
        div_b = divergence_array(b.comps, grid.h)
        div_beta = divergence_array(beta.comps, grid.h)
        V = grid.cell_volume
        E, F = disc.E[n], disc.F[n]
        cE = abs(float(div_b[E].sum()) * V)
        cF = abs(float(div_beta[F].sum()) * V)
        limE = COMPAT_REL * grad_u * math.sqrt(E.sum() * V)
        limF = COMPAT_REL * grad_u * math.sqrt(F.sum() * V)
        if cE > limE or cF > limF:
            raise CompatibilityViolated(
                f"CompatibilityViolated: hole {n}: |int_E div b| = {cE:.3e} (limit {limE:.3e}),"
                f" |int_F div beta| = {cF:.3e} (limit {limF:.3e})"
            )
        e, ie = _local_solve(E, div_b, grid, local_tol)
        f, i_f = _local_solve(F, div_beta, grid, local_tol)
        info = {
            "E_cells": int(E.sum()),
            "F_cells": int(F.sum()),
            "D_cells": int(disc.D[n].sum()),
            "local_E": ie,
            "local_F": i_f,
            "grad_b": w1q_seminorm(b, 2.0),
            "grad_beta": w1q_seminorm(beta, 2.0),
        }
        holes.append(HoleCorrection(n, m, b, beta, e, f, cE, cF, info))
    return CorrectorSet(holes, om)


def hole_face_max(u: VectorField, disc: Discretization) -> float:
    """Largest ``|u|`` on faces touching a hole cell."""
    hm = disc.masks.holes
    out = 0.0
    for a in AXES:
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        touch = np.zeros(disc.grid.face_shape(a), bool)
        lo[a], hi[a] = slice(None, -1), slice(1, None)
        touch[tuple(hi)] |= hm
        touch[tuple(lo)] |= hm
        if touch.any():
            out = max(out, float(np.abs(u.comps[a][touch]).max()))
    return out


def restrict(u: VectorField, disc: Discretization, tol: float = 1e-6, local_tol: float = 1e-10):
    """``R(u)`` with hole and exterior faces clamped to exact zero.

    Returns ``(field, diagnostics)``.  Before clamping the hole-face values
    must be below ``1e-10 ||u||_inf``; after clamping the divergence on the
    fluid cells must still match ``div u`` to ``tol``.
    """
    grid = disc.grid
    cs = build_correctors(u, disc, local_tol)
    raw = u - cs.total(grid) if cs.holes else u.copy()
    pre = hole_face_max(raw, disc)
    umax = u.max_abs()
    if pre > TRACE_REL * max(umax, 1e-300) and umax > 0:
        raise CompatibilityViolated(
            f"CompatibilityViolated: hole trace {pre:.3e} before clamping exceeds {TRACE_REL} ||u||_inf"
        )
    fluid = disc.fluid
    out = VectorField(grid, raw.comps, face_masks(fluid))
    d_in = divergence_array(u.comps, grid.h)
    target = ScalarField(grid, d_in, fluid)
    res = divergence_residual(out, target, fluid)
    if res > tol:
        raise CompatibilityViolated(f"CompatibilityViolated: restriction changed the divergence by {res:.3e}")
    per_hole = [
        {"index": hc.index, "mean": [float(v) for v in hc.mean], "compat_E": hc.compat_E,
         "compat_F": hc.compat_F, **hc.info}
        for hc in cs.holes
    ]
    return out, {"hole_trace_pre_clamp": pre, "restriction_residual": res, "per_hole": per_hole}


# -- the perforated right inverse ------------------------------------------------

def bogovskii_perforated(f: ScalarField, disc: Discretization, backend: str = "min_energy",
                         tol: float = 1e-6, q_list=(2.0,), levels: int = 2,
                         max_iter: int = 500) -> DivSolveSolution:
    """``R(B_Omega(extend_by_zero(f)))`` with ``div u = f`` on the fluid cells.

    ``f`` must have zero mean on the fluid cells.  The base-domain solve runs
    at ``min(1e-2 tol, 1e-10)`` so that the compatibility integrals of the
    correctors are negligible.
    """
    fluid = disc.fluid
    grid = disc.grid
    vals = np.where(fluid, f.values, 0.0)
    check_mean(vals, fluid)
    inner_tol = min(1e-2 * tol, 1e-10)
    g = ScalarField(grid, vals, disc.omega)
    if backend in ("min_energy", "minenergy"):
        base = min_energy_rightinverse(disc.omega, g, inner_tol, max_iter=max_iter)
    elif backend == "integral":
        b = disc.dom.base
        base = bogovskii_integral(disc.omega, g, b.star_center, b.star_radius, inner_tol, levels=levels,
                                  max_iter=max_iter)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    u, diag = restrict(base.u, disc, tol, local_tol=inner_tol)
    fs = ScalarField(grid, vals, fluid)
    res = divergence_residual(u, fs, fluid)
    if res > tol:
        raise ResidualTooLarge(f"ResidualTooLarge: {res:.3e} > tol {tol:.1e}")
    norms = {}
    for q in q_list:
        norms[float(q)] = {
            "lq": lq_norm(u, q),
            "grad_lq": w1q_seminorm(u, q),
            "f_lq": lq_norm(fs, q),
        }
    diag.update({
        "residual": res,
        "hole_trace_max": hole_face_max(u, disc),
        "base_residual": base.residual,
        "base_iterations": base.iterations,
        "backend": base.info.get("backend"),
        "grid": list(grid.shape),
        "h": grid.h,
    })
    if "raw_residual" in base.info:
        diag["integral_raw_residual"] = base.info["raw_residual"]
    return DivSolveSolution(u, res, base.iterations, norms, diag)


# -- right-hand sides ------------------------------------------------------------

def _bump(r2):
    out = np.zeros_like(r2)
    inside = r2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return out


def bump_dx(grid: Grid, center, radius: float, axis: int = 0) -> np.ndarray:
    """Discrete ``d_axis psi`` of a smooth bump ``psi`` of the given radius.

    It is the exact discrete divergence of ``psi e_axis`` sampled on faces,
    so a feasible field with known energy is available as an oracle.
    """
    c = np.asarray(center, float)
    pts = grid.face_points(axis)
    psi = _bump(np.sum((pts - c) ** 2, axis=-1) / radius**2)
    return np.diff(psi, axis=axis) / grid.h


def bump_field(grid: Grid, center, radius: float, axis: int = 0) -> VectorField:
    """The face-sampled ``psi e_axis`` matching ``bump_dx``."""
    c = np.asarray(center, float)
    comps = [np.zeros(grid.face_shape(a)) for a in AXES]
    pts = grid.face_points(axis)
    comps[axis] = _bump(np.sum((pts - c) ** 2, axis=-1) / radius**2)
    return VectorField(grid, comps)


def make_rhs(disc: Discretization, family: str = "bump_dx", q: float = 2.0) -> ScalarField:
    """Zero-mean right-hand side on the fluid cells, scaled to unit ``L^q`` norm.

    ``bump_dx``: derivative of a bump sitting in a corner octant of the base
    domain, away from a centered hole.  ``near_hole``: derivative of a bump
    covering the control ball of hole 0, so the correctors carry most of
    the field.
    """
    grid = disc.grid
    base = disc.dom.base
    if family == "bump_dx":
        r_in = base.inradius
        center = np.array(base.center) + 0.5 * r_in
        vals = bump_dx(grid, center, 0.4 * r_in)
    elif family == "near_hole":
        reg = disc.dom.regions[0]
        vals = bump_dx(grid, reg.center, reg.d_outer)
    else:
        raise ValueError(f"unknown rhs family {family!r}")
    fluid = disc.fluid
    vals = np.where(fluid, vals, 0.0)
    vals[fluid] -= vals[fluid].mean()
    f = ScalarField(grid, vals, fluid)
    norm = lq_norm(f, q)
    if norm == 0:
        raise UnderResolved("UnderResolved: right-hand side vanishes on this grid")
    return f * (1.0 / norm)
