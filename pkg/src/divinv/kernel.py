"""Quadrature of the classical Bogovskii kernel on a star-shaped region.

For a weight ``w`` supported in the star ball with unit integral,

    K(x, y) = (x - y) / |x - y|^3 * int_{|x-y|}^inf w(y + r e) r^2 dr,   e = (x - y)/|x - y|,

and ``u(x) = int f(y) K(x, y) dy`` satisfies ``div u = f`` for zero-mean ``f``.
The radial integral runs over the chord of the star ball cut by the ray,
which is found in closed form; the remaining smooth 1D integral uses
Gauss-Legendre panels with one refinement pass where two rules disagree.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import integrate


def _bump(s2):
    """exp(-1/(1 - s^2)) for s^2 < 1, zero elsewhere."""
    out = np.zeros_like(s2)
    inside = s2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - s2[inside]))
    return out


@lru_cache(maxsize=None)
def _bump_moment() -> float:
    val, _ = integrate.quad(lambda s: math.exp(-1.0 / (1.0 - s * s)) * s * s, 0.0, 1.0,
                            epsabs=1e-15, epsrel=1e-14)
    return val


class StarWeight:
    """Smooth radial weight supported in ``B(center, radius)`` with unit integral."""

    def __init__(self, center, radius: float):
        self.center = np.asarray(center, float)
        self.radius = float(radius)
        self.norm = 1.0 / (4.0 * math.pi * self.radius**3 * _bump_moment())

    def __call__(self, p) -> np.ndarray:
        z = (np.asarray(p, float) - self.center) / self.radius
        return self.norm * _bump(np.sum(z * z, axis=-1))


@lru_cache(maxsize=None)
def _gauss(n: int):
    return np.polynomial.legendre.leggauss(n)


def _panel_sum(weight: StarWeight, y, e, lo, hi, nodes: int, panels: int) -> np.ndarray:
    t, w = _gauss(nodes)
    total = np.zeros(lo.shape)
    width = (hi - lo) / panels
    for k in range(panels):
        a = lo + k * width
        r = a[:, None] + 0.5 * width[:, None] * (t[None, :] + 1.0)
        pts = y[:, None, :] + r[..., None] * e[:, None, :]
        z = (pts - weight.center) / weight.radius
        vals = weight.norm * _bump(np.sum(z * z, axis=-1)) * r * r
        total += 0.5 * width * (vals @ w)
    return total


def radial_tail(weight: StarWeight, y, x, nodes: int = 16, rtol: float = 1e-11) -> np.ndarray:
    """``int_{|x-y|}^inf w(y + r e) r^2 dr`` for paired rows of ``x`` and ``y``."""
    d = x - y
    rho = np.linalg.norm(d, axis=1)
    e = d / rho[:, None]
    yz = y - weight.center
    b = np.sum(e * yz, axis=1)
    c = np.sum(yz * yz, axis=1) - weight.radius**2
    disc = b * b - c
    out = np.zeros(len(rho))
    hit = disc > 0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    lo = np.maximum(rho, -b - sq)
    hi = -b + sq
    live = hit & (hi > lo)
    if not live.any():
        return out
    idx = np.nonzero(live)[0]
    yy, ee, a, z = y[idx], e[idx], lo[idx], hi[idx]
    coarse = _panel_sum(weight, yy, ee, a, z, nodes, 1)
    fine = _panel_sum(weight, yy, ee, a, z, nodes, 2)
    bad = np.abs(fine - coarse) > rtol * np.abs(fine).max()
    if bad.any():
        j = np.nonzero(bad)[0]
        fine[j] = _panel_sum(weight, yy[j], ee[j], a[j], z[j], nodes, 8)
    out[idx] = fine
    return out


def kernel(weight: StarWeight, x, y, nodes: int = 16) -> np.ndarray:
    """Rows of ``K(x_k, y_k)``; ``x`` and ``y`` are paired ``(P, 3)`` arrays."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    d = x - y
    rho = np.linalg.norm(d, axis=1)
    tail = radial_tail(weight, y, x, nodes)
    return d * (tail / rho**3)[:, None]


def _subpoints(level: int) -> np.ndarray:
    m = 2**level
    s = (np.arange(m) + 0.5) / m - 0.5
    return np.stack(np.meshgrid(s, s, s, indexing="ij"), axis=-1).reshape(-1, 3)


def bogovskii_sum(weight: StarWeight, targets, sources, masses, h: float, axis: int,
                  levels: int = 2, near: float = 1.5, chunk: int = 40000, nodes: int = 16) -> np.ndarray:
    """Component ``axis`` of ``sum_y m_y K(x, y)`` at each target point.

    Source cells whose centers lie within ``near * h`` of a target are split
    into ``(2**levels)**3`` sub-cells.  Targets are face centers and sub-cell
    centers never sit on cell faces, so no source point coincides with a
    target.
    """
    targets = np.asarray(targets, float)
    sources = np.asarray(sources, float)
    masses = np.asarray(masses, float)
    nt, ns = len(targets), len(sources)
    out = np.zeros(nt)
    if nt == 0 or ns == 0:
        return out
    sub = _subpoints(levels) * h
    nsub = len(sub)
    rows = max(1, chunk // ns)
    for start in range(0, nt, rows):
        tx = targets[start:start + rows]
        X = np.repeat(tx, ns, axis=0)
        Y = np.tile(sources, (len(tx), 1))
        M = np.tile(masses, len(tx))
        d = np.linalg.norm(X - Y, axis=1)
        far = d > near * h
        contrib = np.zeros(len(X))
        if far.any():
            K = kernel(weight, X[far], Y[far], nodes)[:, axis]
            contrib[far] = M[far] * K
        close = np.nonzero(~far)[0]
        if close.size:
            Xc = np.repeat(X[close], nsub, axis=0)
            Yc = (Y[close][:, None, :] + sub[None, :, :]).reshape(-1, 3)
            K = kernel(weight, Xc, Yc, nodes)[:, axis].reshape(-1, nsub).mean(axis=1)
            contrib[close] = M[close] * K
        out[start:start + len(tx)] = contrib.reshape(len(tx), ns).sum(axis=1)
    return out
