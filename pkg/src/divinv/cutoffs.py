"""Radial cutoff functions around the holes.

Each hole carries two bumps centered at ``x_n``:

* ``chi_n``: 1 on ``B(x_n, delta1 eps)``, 0 outside ``B(x_n, delta2 eps)``;
* ``phi_n``: 1 on the hole (radius ``rho_T eps^alpha``), 0 outside ``B(x_n, delta0 eps^alpha)``;

and ``g = prod_n (1 - phi_n)`` vanishes on every hole and equals 1 away from them.
Transitions are quintic smoothsteps (C^2) whose peak slope is exactly
``15/8`` over the transition width.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import CutoffGeometryError, UnderResolved

PEAK_SLOPE = 1.875  # max of d/ds (6 s^5 - 15 s^4 + 10 s^3), attained at s = 1/2
RHO_FRACTION = 0.9  # rho_T must not exceed this fraction of delta0


@dataclass(frozen=True)
class BumpProfile:
    """Radial profile: 1 for r <= a, 0 for r >= b, quintic smoothstep in between."""

    a: float
    b: float

    def __post_init__(self):
        if not (0 <= self.a < self.b):
            raise CutoffGeometryError(f"bump needs 0 <= a < b, got a={self.a}, b={self.b}")

    @property
    def width(self) -> float:
        return self.b - self.a

    @property
    def slope_bound(self) -> float:
        return PEAK_SLOPE / self.width

    def _s(self, r):
        return np.clip((np.asarray(r, float) - self.a) / self.width, 0.0, 1.0)

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, float)
        s = self._s(r)
        val = 1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s * s)
        # plateau and support values are exact, not rounded
        return np.where(r <= self.a, 1.0, np.where(r >= self.b, 0.0, val))

    def deriv(self, r) -> np.ndarray:
        r = np.asarray(r, float)
        s = self._s(r)
        d = -30.0 * s * s * (1.0 - s) ** 2 / self.width
        return np.where((r <= self.a) | (r >= self.b), 0.0, d)


def _radial(center, p):
    d = np.asarray(p, float) - center
    return d, np.linalg.norm(d, axis=-1)


@dataclass(frozen=True)
class CutoffSet:
    centers: np.ndarray  # (N, 3)
    chi: tuple[BumpProfile, ...]
    phi: tuple[BumpProfile, ...]
    epsilon: float
    alpha: float

    @classmethod
    def build(cls, dom) -> "CutoffSet":
        """Cutoffs of a validated domain; rejects holes with rho_T > 0.9 delta0."""
        cfg = dom.config
        chis, phis = [], []
        for reg in dom.regions:
            rho = reg.shape.circumradius
            if rho > RHO_FRACTION * cfg.delta0:
                raise CutoffGeometryError(
                    f"hole {reg.index}: circumradius {rho} > {RHO_FRACTION} delta0 = {RHO_FRACTION * cfg.delta0}"
                )
            chis.append(BumpProfile(reg.d_inner, reg.d_outer))
            phis.append(BumpProfile(rho * reg.scale, reg.f_outer))
        return cls(dom.centers, tuple(chis), tuple(phis), cfg.epsilon, cfg.alpha)

    def __len__(self):
        return len(self.chi)


def eval_chi(cs: CutoffSet, n: int, p) -> np.ndarray:
    return cs.chi[n](_radial(cs.centers[n], p)[1])


def eval_phi(cs: CutoffSet, n: int, p) -> np.ndarray:
    return cs.phi[n](_radial(cs.centers[n], p)[1])


def eval_g(cs: CutoffSet, p) -> np.ndarray:
    p = np.asarray(p, float)
    g = np.ones(p.shape[:-1])
    for n in range(len(cs)):
        g = g * (1.0 - eval_phi(cs, n, p))
    return g


def _grad(profile: BumpProfile, center, p) -> np.ndarray:
    d, r = _radial(center, p)
    dr = profile.deriv(r)
    safe = np.where(r > 0, r, 1.0)
    return d * (dr / safe)[..., None]


def grad_chi(cs: CutoffSet, n: int, p) -> np.ndarray:
    return _grad(cs.chi[n], cs.centers[n], p)


def grad_phi(cs: CutoffSet, n: int, p) -> np.ndarray:
    return _grad(cs.phi[n], cs.centers[n], p)


def grad_g(cs: CutoffSet, p) -> np.ndarray:
    """Product rule over all holes (the phi supports are disjoint in valid domains)."""
    p = np.asarray(p, float)
    factors = [1.0 - eval_phi(cs, n, p) for n in range(len(cs))]
    out = np.zeros(p.shape)
    for n in range(len(cs)):
        rest = np.ones(p.shape[:-1])
        for m, f in enumerate(factors):
            if m != n:
                rest = rest * f
        out -= grad_phi(cs, n, p) * rest[..., None]
    return out


def _sampled_peak(profile: BumpProfile, samples: int) -> float:
    samples += 1 - samples % 2  # odd count puts a sample on the midpoint
    r = np.linspace(profile.a, profile.b, samples)
    return float(np.max(np.abs(profile.deriv(r))))


def certify_gradient_bounds(cs: CutoffSet, samples: int = 10001) -> dict:
    """Gradient-bound products ``eps sup|grad chi|``, ``eps^alpha sup|grad phi|``, ``eps^alpha sup|grad g|``.

    Sampled peaks (dense 1D sampling) are reported next to the analytic
    slope ``1.875 / width``; they must not exceed it.
    """
    if samples < 10000:
        raise ValueError("certificate needs at least 1e4 samples")
    ea = cs.epsilon**cs.alpha
    chi_s = max((_sampled_peak(p, samples) for p in cs.chi), default=0.0)
    phi_s = max((_sampled_peak(p, samples) for p in cs.phi), default=0.0)
    chi_a = max((p.slope_bound for p in cs.chi), default=0.0)
    phi_a = max((p.slope_bound for p in cs.phi), default=0.0)
    return {
        "chi": chi_a * cs.epsilon,
        "phi": phi_a * ea,
        # disjoint phi supports: grad g = -grad phi_n on the n-th transition shell
        "g": phi_a * ea,
        "chi_sampled": chi_s * cs.epsilon,
        "phi_sampled": phi_s * ea,
        "g_sampled": phi_s * ea,
        "sampled_within_analytic": bool(chi_s <= chi_a * (1 + 1e-12) and phi_s <= phi_a * (1 + 1e-12)),
    }


def _radial_integral(fn, a, b) -> float:
    if b <= a:
        return 0.0
    val, _ = integrate.quad(fn, a, b, epsabs=0.0, epsrel=1e-12, limit=200)
    return val


def ge_exponents(q: float, alpha: float) -> tuple[float, float]:
    e = 3.0 * (alpha - 1.0) / q
    return e, e - alpha


def g_norm_check(cs: CutoffSet, q: float, grid=None, omega_mask=None) -> dict:
    """``||1 - g||_{L^q}`` and ``||grad g||_{L^q}`` with their ratios to the predicted powers of eps.

    Without ``grid`` the norms are exact radial integrals (each ``1 - g``
    equals ``phi_n`` on its own ball since the balls are disjoint).  With a
    grid the fields are sampled at cell centers (inside ``omega_mask`` if
    given); the grid must put at least 3 cells across ``delta0 eps^alpha``.
    """
    if q < 1:
        raise ValueError("q must be >= 1")
    e1, e2 = ge_exponents(q, cs.alpha)
    if grid is None:
        s1 = s2 = 0.0
        for prof in cs.phi:
            plateau = prof.a**3 / 3.0
            s1 += 4 * math.pi * (plateau + _radial_integral(lambda r: float(prof(r)) ** q * r * r, prof.a, prof.b))
            s2 += 4 * math.pi * _radial_integral(lambda r: abs(float(prof.deriv(r))) ** q * r * r, prof.a, prof.b)
        n1, n2 = s1 ** (1 / q), s2 ** (1 / q)
        mode = "radial"
    else:
        support = min((p.b for p in cs.phi), default=math.inf)
        if support / grid.h < 3:
            raise UnderResolved(f"UnderResolved: {support / grid.h:.2f} cells across delta0 eps^alpha (< 3)")
        pts = grid.cell_points()
        mask = np.ones(grid.shape, bool) if omega_mask is None else np.asarray(omega_mask, bool)
        one_minus = np.where(mask, 1.0 - eval_g(cs, pts), 0.0)
        gg = np.linalg.norm(grad_g(cs, pts), axis=-1)
        gg = np.where(mask, gg, 0.0)
        V = grid.cell_volume
        n1 = float(np.sum(one_minus**q) * V) ** (1 / q)
        n2 = float(np.sum(gg**q) * V) ** (1 / q)
        mode = "grid"
    eps = cs.epsilon
    return {
        "mode": mode,
        "q": q,
        "holes": len(cs),
        "one_minus_g": n1,
        "grad_g": n2,
        "exp_one_minus_g": e1,
        "exp_grad_g": e2,
        "ratio_one_minus_g": n1 / eps**e1,
        "ratio_grad_g": n2 / eps**e2,
    }
