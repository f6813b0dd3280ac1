"""Perforated domains: base domain, hole layout and validation.

A perforated domain is a base domain (ball or axis-aligned box) minus a
family of small holes ``x_n + eps**alpha * T_n``.  Each hole carries three
concentric control balls

    hole  c  B(x_n, delta0 eps^alpha)  c  B(x_n, delta1 eps)  c  B(x_n, delta2 eps)  c  base

and the outer balls of distinct holes must be pairwise disjoint.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    BadConfig,
    BadDeltas,
    ControlVolumesOverlap,
    HoleCountExceeded,
    InclusionChainViolated,
    InfeasibleDeltas,
)


def _vec3(v) -> tuple[float, float, float]:
    a = np.asarray(v, dtype=float).reshape(-1)
    if a.size == 1:
        a = np.repeat(a, 3)
    if a.size != 3:
        raise BadConfig(f"expected a 3-vector, got {v!r}")
    return (float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class BaseDomain:
    """Ball or axis-aligned box, star-shaped with respect to ``B(star_center, star_radius)``."""

    kind: str
    center: tuple[float, float, float]
    radius: float | None = None
    half_extents: tuple[float, float, float] | None = None
    star_center: tuple[float, float, float] | None = None
    star_radius: float | None = None

    def __post_init__(self):
        if self.kind not in ("ball", "box"):
            raise BadConfig(f"unknown base domain kind {self.kind!r}")
        object.__setattr__(self, "center", _vec3(self.center))
        if self.kind == "ball":
            if self.radius is None or self.radius <= 0:
                raise BadConfig("ball needs a positive radius")
            inr = float(self.radius)
        else:
            if self.half_extents is None:
                raise BadConfig("box needs half_extents")
            he = _vec3(self.half_extents)
            if min(he) <= 0:
                raise BadConfig("box half extents must be positive")
            object.__setattr__(self, "half_extents", he)
            inr = min(he)
        if self.star_center is None:
            object.__setattr__(self, "star_center", self.center)
        else:
            object.__setattr__(self, "star_center", _vec3(self.star_center))
        if self.star_radius is None:
            object.__setattr__(self, "star_radius", 0.5 * inr)
        # star ball strictly inside the domain
        d = float(self.distance_to_boundary(np.array(self.star_center)))
        if not (0 < self.star_radius < d):
            raise BadConfig("star ball must lie inside the domain")

    @classmethod
    def ball(cls, center=(0.0, 0.0, 0.0), radius=1.0, **kw) -> "BaseDomain":
        return cls("ball", center, radius=radius, **kw)

    @classmethod
    def box(cls, center=(0.0, 0.0, 0.0), half_extents=(0.5, 0.5, 0.5), **kw) -> "BaseDomain":
        return cls("box", center, half_extents=half_extents, **kw)

    @property
    def volume(self) -> float:
        if self.kind == "ball":
            return 4.0 / 3.0 * math.pi * self.radius**3
        return 8.0 * math.prod(self.half_extents)

    @property
    def ball_equivalent(self) -> float:
        """``3|Omega| / (4 pi)``; exact for balls."""
        if self.kind == "ball":
            return self.radius**3
        return 3.0 / (4.0 * math.pi) * self.volume

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        c = np.array(self.center)
        e = np.full(3, self.radius) if self.kind == "ball" else np.array(self.half_extents)
        return c - e, c + e

    @property
    def inradius(self) -> float:
        return self.radius if self.kind == "ball" else min(self.half_extents)

    def distance_to_boundary(self, p) -> np.ndarray:
        """Distance to the boundary, positive inside and negative outside."""
        p = np.asarray(p, dtype=float)
        z = p - np.array(self.center)
        if self.kind == "ball":
            return self.radius - np.linalg.norm(z, axis=-1)
        q = np.abs(z) - np.array(self.half_extents)
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(np.max(q, axis=-1), 0.0)
        return -(outside + inside)

    def contains(self, p) -> np.ndarray:
        return self.distance_to_boundary(p) > 0

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind, "center": list(self.center)}
        if self.kind == "ball":
            d["radius"] = self.radius
        else:
            d["half_extents"] = list(self.half_extents)
        d["star_center"] = list(self.star_center)
        d["star_radius"] = self.star_radius
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BaseDomain":
        try:
            return cls(
                d["kind"],
                d["center"],
                radius=d.get("radius"),
                half_extents=d.get("half_extents"),
                star_center=d.get("star_center"),
                star_radius=d.get("star_radius"),
            )
        except KeyError as exc:
            raise BadConfig(f"base domain missing field {exc}") from None


@dataclass(frozen=True)
class HoleShape:
    """Reference hole ``T_n`` (before scaling by ``eps**alpha``), a ball or an ellipsoid."""

    kind: str = "ball"
    semi_axes: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.kind not in ("ball", "ellipsoid"):
            raise BadConfig(f"unknown hole shape {self.kind!r}")
        ax = _vec3(self.semi_axes)
        if min(ax) <= 0:
            raise BadConfig("hole semi-axes must be positive")
        if self.kind == "ball" and not (ax[0] == ax[1] == ax[2]):
            raise BadConfig("ball hole needs equal semi-axes")
        if max(ax) > 1.0:
            raise BadConfig("hole shape must fit in the unit ball")
        object.__setattr__(self, "semi_axes", ax)

    @classmethod
    def ball(cls, radius: float = 1.0) -> "HoleShape":
        return cls("ball", (radius, radius, radius))

    @classmethod
    def ellipsoid(cls, semi_axes) -> "HoleShape":
        return cls("ellipsoid", semi_axes)

    @property
    def circumradius(self) -> float:
        return max(self.semi_axes)

    @property
    def inradius(self) -> float:
        return min(self.semi_axes)

    def contains(self, z) -> np.ndarray:
        """Membership for points ``z`` in reference coordinates (open set)."""
        z = np.asarray(z, dtype=float)
        return np.sum((z / np.array(self.semi_axes)) ** 2, axis=-1) < 1.0

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Uniform points inside the shape."""
        d = rng.normal(size=(count, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        r = rng.uniform(size=(count, 1)) ** (1.0 / 3.0)
        return 0.999 * d * r * np.array(self.semi_axes)

    def to_dict(self) -> dict:
        if self.kind == "ball":
            return {"kind": "ball", "radius": self.semi_axes[0]}
        return {"kind": "ellipsoid", "semi_axes": list(self.semi_axes)}

    @classmethod
    def from_dict(cls, d) -> "HoleShape":
        if isinstance(d, str):
            d = {"kind": d}
        kind = d.get("kind", "ball")
        if kind == "ball":
            return cls.ball(d.get("radius", 1.0))
        return cls.ellipsoid(d["semi_axes"])


@dataclass(frozen=True)
class HoleSpec:
    center: tuple[float, float, float]
    shape: HoleShape = field(default_factory=HoleShape)

    def __post_init__(self):
        object.__setattr__(self, "center", _vec3(self.center))


@dataclass(frozen=True)
class PerforationConfig:
    epsilon: float
    alpha: float
    delta0: float
    delta1: float
    delta2: float
    holes: tuple[HoleSpec, ...]
    base: BaseDomain

    def __post_init__(self):
        object.__setattr__(self, "holes", tuple(self.holes))

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "alpha": self.alpha,
            "delta0": self.delta0,
            "delta1": self.delta1,
            "delta2": self.delta2,
            "base": self.base.to_dict(),
            "holes": [{"center": list(h.center), "shape": h.shape.to_dict()} for h in self.holes],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "PerforationConfig":
        try:
            holes = tuple(
                HoleSpec(h["center"], HoleShape.from_dict(h.get("shape", "ball"))) for h in d["holes"]
            )
            return cls(
                float(d["epsilon"]),
                float(d["alpha"]),
                float(d["delta0"]),
                float(d["delta1"]),
                float(d["delta2"]),
                holes,
                BaseDomain.from_dict(d["base"]),
            )
        except (KeyError, TypeError) as exc:
            raise BadConfig(f"malformed configuration: {exc}") from None

    @classmethod
    def from_json(cls, text: str) -> "PerforationConfig":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class HoleRegions:
    """Geometry attached to one validated hole."""

    index: int
    center: np.ndarray
    shape: HoleShape
    scale: float  # eps**alpha
    d_inner: float  # delta1 * eps
    d_outer: float  # delta2 * eps, control ball radius (outer radius of D and E)
    f_outer: float  # delta0 * eps**alpha, outer radius of F

    @property
    def hole_circumradius(self) -> float:
        return self.shape.circumradius * self.scale

    def in_hole(self, p) -> np.ndarray:
        z = (np.asarray(p, dtype=float) - self.center) / self.scale
        return self.shape.contains(z)

    def _r(self, p) -> np.ndarray:
        return np.linalg.norm(np.asarray(p, dtype=float) - self.center, axis=-1)

    def in_D(self, p) -> np.ndarray:
        r = self._r(p)
        return (r > self.d_inner) & (r < self.d_outer)

    def in_E(self, p) -> np.ndarray:
        return (self._r(p) < self.d_outer) & ~self.in_hole(p)

    def in_F(self, p) -> np.ndarray:
        return (self._r(p) < self.f_outer) & ~self.in_hole(p)


@dataclass(frozen=True)
class PerforatedDomain:
    config: PerforationConfig
    regions: tuple[HoleRegions, ...]
    hole_count: int
    hole_count_bound: int
    min_gap: float  # smallest |x_m - x_n| - 2 delta2 eps (inf for a single hole)
    min_boundary_clearance: float  # smallest dist(x_n, boundary) - delta2 eps

    @property
    def base(self) -> BaseDomain:
        return self.config.base

    @property
    def epsilon(self) -> float:
        return self.config.epsilon

    @property
    def alpha(self) -> float:
        return self.config.alpha

    @property
    def centers(self) -> np.ndarray:
        return np.array([h.center for h in self.config.holes]).reshape(-1, 3)

    def summary(self) -> dict:
        return {
            "N": self.hole_count,
            "bound": self.hole_count_bound,
            "min_gap": self.min_gap,
            "min_boundary_clearance": self.min_boundary_clearance,
        }


def hole_count_bound(epsilon: float, base: BaseDomain) -> int:
    """``floor(3|Omega| / (4 pi eps^3))``, the number of disjoint eps-balls by volume."""
    if epsilon <= 0:
        raise BadConfig("epsilon must be positive")
    x = base.ball_equivalent / epsilon**3
    return int(math.floor(x * (1 + 1e-12)))


def _check_scalars(cfg: PerforationConfig):
    if not (0 < cfg.epsilon < 1):
        raise BadConfig(f"epsilon must lie in (0,1), got {cfg.epsilon}")
    if cfg.alpha < 1:
        raise BadConfig(f"alpha must be >= 1, got {cfg.alpha}")
    if min(cfg.delta0, cfg.delta1, cfg.delta2) <= 0:
        raise BadDeltas("deltas must be positive")
    if cfg.delta1 >= cfg.delta2:
        raise BadDeltas(f"BadDeltas: delta1={cfg.delta1} must be < delta2={cfg.delta2}")


def validate_config(cfg: PerforationConfig) -> PerforatedDomain:
    """Check every geometric hypothesis and attach per-hole regions."""
    _check_scalars(cfg)
    eps, alpha = cfg.epsilon, cfg.alpha
    scale = eps**alpha
    f_outer = cfg.delta0 * scale
    d_inner, d_outer = cfg.delta1 * eps, cfg.delta2 * eps
    regions = []
    clearance = math.inf
    for n, hole in enumerate(cfg.holes):
        if hole.shape.circumradius > cfg.delta0:
            raise InclusionChainViolated(n, "T_n in B(0, delta0)")
        if f_outer > d_inner:
            raise InclusionChainViolated(n, "delta0 eps^alpha <= delta1 eps")
        dist = float(cfg.base.distance_to_boundary(np.array(hole.center)))
        if dist <= d_outer:
            raise InclusionChainViolated(n, "B(x_n, delta2 eps) in Omega")
        clearance = min(clearance, dist - d_outer)
        regions.append(
            HoleRegions(n, np.array(hole.center), hole.shape, scale, d_inner, d_outer, f_outer)
        )
    centers = np.array([h.center for h in cfg.holes]).reshape(-1, 3)
    gap = math.inf
    if len(centers) > 1:
        tree = cKDTree(centers)
        pairs = sorted(tree.query_pairs(2 * d_outer * (1 + 1e-12)))
        for m, n in pairs:
            dmn = float(np.linalg.norm(centers[m] - centers[n]))
            if dmn <= 2 * d_outer:
                raise ControlVolumesOverlap(m, n, dmn, 2 * d_outer)
        dd, _ = tree.query(centers, k=2)
        gap = float(dd[:, 1].min()) - 2 * d_outer
    bound = hole_count_bound(eps, cfg.base)
    if len(cfg.holes) > bound:
        raise HoleCountExceeded(f"HoleCountExceeded: N={len(cfg.holes)} > bound {bound}")
    return PerforatedDomain(cfg, tuple(regions), len(cfg.holes), bound, gap, clearance)


def _feasible_deltas(epsilon, alpha, delta0, delta1, delta2):
    if delta1 >= delta2:
        raise BadDeltas(f"BadDeltas: delta1={delta1} must be < delta2={delta2}")
    if delta0 * epsilon**alpha > delta1 * epsilon:
        raise InfeasibleDeltas(
            f"InfeasibleDeltas: delta0 eps^alpha = {delta0 * epsilon**alpha:.6g}"
            f" > delta1 eps = {delta1 * epsilon:.6g}"
        )


def _shape_for(shape_family, rng: np.random.Generator) -> HoleShape:
    if isinstance(shape_family, HoleShape):
        return shape_family
    if shape_family == "ball":
        return HoleShape.ball(1.0)
    if shape_family == "ellipsoid":
        return HoleShape.ellipsoid(rng.uniform(0.5, 1.0, size=3))
    raise BadConfig(f"unknown shape family {shape_family!r}")


def generate_random_config(
    epsilon: float,
    alpha: float,
    deltas: Sequence[float],
    base: BaseDomain,
    shape_family="ball",
    seed: int = 0,
    *,
    max_holes: int | None = None,
    max_rejections: int = 2000,
    clearance: float = 1e-6,
) -> PerforationConfig:
    """Greedy rejection sampling of hole centers.

    Stops when the hole count bound (or ``max_holes``) is reached or after
    ``max_rejections`` consecutive rejected draws.
    """
    delta0, delta1, delta2 = deltas
    _feasible_deltas(epsilon, alpha, delta0, delta1, delta2)
    rng = np.random.default_rng(seed)
    limit = hole_count_bound(epsilon, base)
    if max_holes is not None:
        limit = min(limit, max_holes)
    r_ctrl = delta2 * epsilon
    lo, hi = base.bounds
    centers: list[np.ndarray] = []
    shapes: list[HoleShape] = []
    misses = 0
    while len(centers) < limit and misses < max_rejections:
        p = rng.uniform(lo, hi)
        ok = float(base.distance_to_boundary(p)) > r_ctrl * (1 + clearance)
        if ok and centers:
            d = np.linalg.norm(np.array(centers) - p, axis=1)
            ok = bool(d.min() > 2 * r_ctrl * (1 + clearance))
        if not ok:
            misses += 1
            continue
        misses = 0
        centers.append(p)
        shapes.append(_shape_for(shape_family, rng))
    holes = tuple(HoleSpec(tuple(c), s) for c, s in zip(centers, shapes))
    return PerforationConfig(epsilon, alpha, delta0, delta1, delta2, holes, base)


def single_hole_config(epsilon, alpha, deltas, base: BaseDomain, shape: HoleShape | None = None,
                       center=None) -> PerforationConfig:
    delta0, delta1, delta2 = deltas
    _feasible_deltas(epsilon, alpha, delta0, delta1, delta2)
    c = base.center if center is None else center
    return PerforationConfig(epsilon, alpha, delta0, delta1, delta2,
                             (HoleSpec(c, shape or HoleShape.ball(1.0)),), base)


def lattice_config(epsilon, alpha, deltas, base: BaseDomain, shape: HoleShape | None = None,
                   spacing: float | None = None) -> PerforationConfig:
    """Holes on a cubic lattice (default spacing ``2 eps``) centered on the base domain."""
    delta0, delta1, delta2 = deltas
    _feasible_deltas(epsilon, alpha, delta0, delta1, delta2)
    s = 2.0 * epsilon if spacing is None else spacing
    if s <= 2 * delta2 * epsilon:
        raise BadConfig("lattice spacing must exceed the control ball diameter")
    lo, hi = base.bounds
    c = np.array(base.center)
    axes = []
    for k in range(3):
        m = int(np.floor((hi[k] - lo[k]) / (2 * s))) + 1
        axes.append(c[k] + s * np.arange(-m, m + 1))
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    keep = base.distance_to_boundary(pts) > delta2 * epsilon * (1 + 1e-9)
    shape = shape or HoleShape.ball(1.0)
    holes = tuple(HoleSpec(tuple(p), shape) for p in pts[keep])
    return PerforationConfig(epsilon, alpha, delta0, delta1, delta2, holes, base)


@dataclass(frozen=True)
class PointTag:
    """Region tag of a point: fluid, hole(n), outside, annulus_D(n) or region_F(n)."""

    kind: str
    index: int | None = None

    @property
    def base(self) -> str:
        """Coarse tag, one of fluid / hole / outside."""
        return "fluid" if self.kind in ("annulus_D", "region_F") else self.kind

    def __str__(self):
        return self.kind if self.index is None else f"{self.kind}({self.index})"


def classify_point(dom: PerforatedDomain, p) -> PointTag:
    p = np.asarray(p, dtype=float)
    if not bool(dom.base.contains(p)):
        return PointTag("outside")
    for reg in dom.regions:
        if np.linalg.norm(p - reg.center) >= reg.d_outer:
            continue
        if bool(reg.in_hole(p)):
            return PointTag("hole", reg.index)
        if bool(reg.in_F(p)):
            return PointTag("region_F", reg.index)
        if bool(reg.in_D(p)):
            return PointTag("annulus_D", reg.index)
    return PointTag("fluid")


def load_config(path) -> PerforationConfig:
    with open(path) as fh:
        return PerforationConfig.from_dict(json.load(fh))
