"""Epsilon sweeps of the perforated right inverse and the annulus Poincare constant."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import stats

from .errors import ExponentRange, NonConvergence, TooFewPoints, UnderResolved
from .fields import Grid
from .geometry import (
    BaseDomain,
    HoleShape,
    generate_random_config,
    lattice_config,
    single_hole_config,
    validate_config,
)
from .perforated import (
    DEFAULT_CAP,
    bogovskii_perforated,
    discretize,
    make_rhs,
    planned_cells,
    resolution_h,
)

log = logging.getLogger(__name__)

CSV_COLUMNS = ("epsilon", "q", "alpha", "nx", "ratio", "residual", "seconds")


def predicted_exponent(q: float, alpha: float, allow_outside: bool = False) -> float:
    """Exponent ``e = ((3 - q) alpha - 3) / q`` of the bound ``C (1 + eps^e)``."""
    if not 1 < q < 3:
        if not allow_outside:
            raise ExponentRange(f"ExponentRange: q = {q} outside (1, 3)")
        warnings.warn(f"q = {q} outside (1, 3): exploratory exponent only", stacklevel=2)
    if alpha < 1:
        raise ExponentRange(f"ExponentRange: alpha = {alpha} < 1")
    return ((3.0 - q) * alpha - 3.0) / q


@dataclass
class SweepPlan:
    epsilons: list
    q_list: list
    alpha: float
    deltas: tuple  # (delta0, delta1, delta2)
    layout: str = "single"  # single | lattice | random
    seed: int = 0
    max_holes: int = 8
    rhs: str = "bump_dx"  # bump_dx | near_hole
    cells_per_feature: int = 3
    max_cells: int = DEFAULT_CAP
    tol: float = 1e-6
    backend: str = "min_energy"
    grid: str = "per_epsilon"  # per_epsilon | common
    base: BaseDomain = field(default_factory=lambda: BaseDomain.box(half_extents=(0.25, 0.25, 0.25)))
    hole: HoleShape = field(default_factory=lambda: HoleShape.ball(1.0))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["base"] = self.base.to_dict()
        d["hole"] = self.hole.to_dict()
        d["deltas"] = list(self.deltas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SweepPlan":
        d = dict(d)
        if "base" in d:
            d["base"] = BaseDomain.from_dict(d["base"])
        if "hole" in d:
            d["hole"] = HoleShape.from_dict(d["hole"])
        d["deltas"] = tuple(d["deltas"])
        d["epsilons"] = [float(e) for e in d["epsilons"]]
        d["q_list"] = [float(q) for q in d["q_list"]]
        return cls(**d)

    @classmethod
    def load(cls, path) -> "SweepPlan":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class SweepRecord:
    epsilon: float
    q: float
    alpha: float
    nx: int
    ratio: float
    residual: float
    seconds: float


def build_domain(plan: SweepPlan, eps: float):
    if plan.layout == "single":
        cfg = single_hole_config(eps, plan.alpha, plan.deltas, plan.base, plan.hole)
    elif plan.layout == "lattice":
        cfg = lattice_config(eps, plan.alpha, plan.deltas, plan.base, plan.hole)
    elif plan.layout == "random":
        cfg = generate_random_config(eps, plan.alpha, plan.deltas, plan.base, plan.hole,
                                     seed=plan.seed, max_holes=plan.max_holes)
    else:
        raise ValueError(f"unknown layout {plan.layout!r}")
    return validate_config(cfg)


def resolution_for(plan: SweepPlan) -> dict:
    """Grid spacing per epsilon; raises UnderResolved if any grid exceeds the cap.

    Every geometry is validated first, so geometric errors take precedence.
    """
    doms = {eps: build_domain(plan, eps) for eps in plan.epsilons}
    hs = {eps: resolution_h(d, plan.cells_per_feature) for eps, d in doms.items()}
    if plan.grid == "common" and hs:
        hmin = min(hs.values())
        hs = {eps: hmin for eps in hs}
    elif plan.grid != "per_epsilon":
        raise ValueError(f"unknown grid mode {plan.grid!r}")
    for eps, h in hs.items():
        cells = planned_cells(doms[eps], h)
        if cells > plan.max_cells:
            raise UnderResolved(
                f"UnderResolved: eps={eps} needs {cells} cells (> cap {plan.max_cells}) "
                f"for {plan.cells_per_feature} cells per feature"
            )
    return hs


def _run_point(plan: SweepPlan, eps: float, h: float) -> list:
    t0 = time.perf_counter()
    dom = build_domain(plan, eps)
    disc = discretize(dom, h=h, max_cells=plan.max_cells)
    f = make_rhs(disc, plan.rhs, plan.q_list[0])
    sol = bogovskii_perforated(f, disc, plan.backend, plan.tol, plan.q_list)
    dt = time.perf_counter() - t0
    out = []
    for q in plan.q_list:
        n = sol.norms[float(q)]
        out.append(SweepRecord(eps, float(q), plan.alpha, disc.grid.shape[0],
                               n["grad_lq"] / n["f_lq"], sol.residual, dt))
    return out


def run_sweep(plan: SweepPlan, threads: int = 1) -> list:
    """One record per (epsilon, q), sorted by (epsilon, q)."""
    if not plan.epsilons:
        return []
    hs = resolution_for(plan)
    jobs = [(eps, hs[eps]) for eps in plan.epsilons]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_run_point, plan, eps, h) for eps, h in jobs]
            results = [f.result() for f in futures]
    else:
        results = [_run_point(plan, eps, h) for eps, h in jobs]
    records = [r for chunk in results for r in chunk]
    return sorted(records, key=lambda r: (r.epsilon, r.q))


def fit_exponent(records) -> dict:
    """Least squares of log ratio on log epsilon."""
    records = list(records)
    if len(records) < 3:
        raise TooFewPoints(f"TooFewPoints: {len(records)} records (need 3)")
    x = np.log([r.epsilon for r in records])
    y = np.log([r.ratio for r in records])
    fit = stats.linregress(x, y)
    return {"slope": float(fit.slope), "intercept": float(fit.intercept), "r_squared": float(fit.rvalue**2)}


def bound_check(records, e: float, margin: float = 3.0, uniform_spread: float = 2.0) -> dict:
    """Compare ratios with ``C (1 + eps^e)``, ``C`` calibrated at the largest epsilon.

    For ``e >= 0`` the bound is uniform in epsilon and the check is
    ``max ratio / min ratio < uniform_spread``.
    """
    records = sorted(records, key=lambda r: r.epsilon)
    if len(records) < 2:
        raise TooFewPoints(f"TooFewPoints: {len(records)} records (need 2)")
    top = records[-1]
    C = top.ratio / (1.0 + top.epsilon**e)
    rows = []
    for r in records:
        bound = margin * C * (1.0 + r.epsilon**e)
        rows.append({"epsilon": r.epsilon, "ratio": r.ratio, "bound": bound, "pass": bool(r.ratio <= bound)})
    out = {"C": C, "exponent": e, "margin": margin, "records": rows}
    ratios = [r.ratio for r in records]
    if e >= 0:
        spread = max(ratios) / min(ratios)
        out.update(rule="uniform", spread=spread, passed=bool(spread < uniform_spread))
    else:
        out.update(rule="margin", passed=all(r["pass"] for r in rows))
    return out


def fit_report(records, q: float, alpha: float) -> dict:
    sel = [r for r in records if r.q == q and r.alpha == alpha]
    e = predicted_exponent(q, alpha, allow_outside=True)
    rep = {"q": q, "alpha": alpha, "predicted": e}
    fit = fit_exponent(sel) if len(sel) >= 3 else {"slope": None, "r_squared": None}
    rep.update(slope=fit["slope"], r_squared=fit["r_squared"])
    rep["bound_check"] = bound_check(sel, e)["records"] if len(sel) >= 2 else []
    rep["bound_check_passed"] = bound_check(sel, e)["passed"] if len(sel) >= 2 else None
    return rep


def refinement_check(plan: SweepPlan, eps: float, q: float | None = None, limit: float = 0.1) -> dict:
    """Ratio at the plan resolution and at half the spacing; a change >= ``limit`` is UnderResolved."""
    q = plan.q_list[0] if q is None else q
    h = resolution_for(SweepPlan(**{**plan.__dict__, "epsilons": [eps]}))[eps]
    coarse = _run_point(plan, eps, h)
    fine = _run_point(plan, eps, 0.5 * h)
    rc = next(r.ratio for r in coarse if r.q == q)
    rf = next(r.ratio for r in fine if r.q == q)
    change = abs(rf - rc) / rf
    if change >= limit:
        raise UnderResolved(f"UnderResolved: ratio changes by {change:.1%} under refinement at eps={eps}")
    return {"epsilon": eps, "coarse": rc, "fine": rf, "change": change}


# -- CSV / JSON ---------------------------------------------------------------

def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def sweep_csv(records, timing: bool = False) -> str:
    """CSV text; the ``seconds`` column is ``nan`` unless ``timing`` (keeps output byte-stable)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        sec = r.seconds if timing else float("nan")
        w.writerow([_fmt(r.epsilon), _fmt(r.q), _fmt(r.alpha), r.nx, _fmt(r.ratio), _fmt(r.residual), _fmt(sec)])
    return buf.getvalue()


def write_sweep_csv(records, path, timing: bool = False) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(sweep_csv(records, timing))


def read_sweep_csv(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and tuple(rows[0].keys()) != CSV_COLUMNS:
        raise ValueError(f"unexpected columns {tuple(rows[0].keys())}")
    return [
        SweepRecord(float(r["epsilon"]), float(r["q"]), float(r["alpha"]), int(r["nx"]),
                    float(r["ratio"]), float(r["residual"]), float(r["seconds"]))
        for r in rows
    ]


# -- Poincare constant on annuli --------------------------------------------------

def neumann_laplacian(mask: np.ndarray, h: float) -> sp.csc_matrix:
    """Cell-centered Neumann Laplacian (graph Laplacian of face-adjacent cells) / h^2."""
    n = int(mask.sum())
    index = np.full(mask.shape, -1, dtype=np.int64)
    index[mask] = np.arange(n)
    rows, cols = [], []
    for a in range(mask.ndim):
        lo = [slice(None)] * mask.ndim
        hi = [slice(None)] * mask.ndim
        lo[a], hi[a] = slice(None, -1), slice(1, None)
        both = mask[tuple(lo)] & mask[tuple(hi)]
        rows.append(index[tuple(lo)][both])
        cols.append(index[tuple(hi)][both])
    i = np.concatenate(rows)
    j = np.concatenate(cols)
    W = sp.coo_matrix((np.ones(len(i)), (i, j)), shape=(n, n))
    W = (W + W.T).tocsr()
    deg = np.asarray(W.sum(axis=1)).ravel()
    return (sp.diags(deg) - W).tocsc() / h**2


def smallest_nonzero_eigenvalue(L: sp.spmatrix, rtol: float = 1e-10, max_iter: int = 500, seed: int = 0,
                                 block: int = 4) -> float:
    """Block inverse iteration on mean-zero vectors with Rayleigh-Ritz.

    Solves go through the bordered system ``[[L, 1], [1^T, 0]]``, which is
    nonsingular on a connected region and keeps iterates mean-free.  The
    block absorbs the near-degenerate lowest modes of symmetric annuli,
    which would stall a single-vector iteration.
    """
    n = L.shape[0]
    if n < 2:
        raise NonConvergence("NonConvergence: region has fewer than 2 cells")
    k = min(block, n - 1)
    one = np.ones((n, 1))
    K = sp.bmat([[L, sp.csc_matrix(one)], [sp.csc_matrix(one.T), None]], format="csc")
    lu = spla.splu(K)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, k))
    lam_old = math.inf
    for _ in range(max_iter):
        X -= X.mean(axis=0)
        Q, _ = np.linalg.qr(X)
        theta, V = np.linalg.eigh(Q.T @ (L @ Q))
        lam = float(theta[0])
        if abs(lam - lam_old) <= rtol * abs(lam):
            return lam
        lam_old = lam
        X = lu.solve(np.vstack([Q @ V, np.zeros((1, k))]))[:n]
    raise NonConvergence(f"NonConvergence: inverse iteration did not settle in {max_iter} steps")


def poincare_constant(dom, n: int = 0, resolution: int = 24) -> float:
    """``lambda_2^(-1/2)`` of the Neumann Laplacian on ``D_n``, ``resolution`` cells across ``2 delta2 eps``."""
    reg = dom.regions[n]
    h = 2.0 * reg.d_outer / resolution
    if (reg.d_outer - reg.d_inner) / h < 3 - 1e-9:
        raise UnderResolved("UnderResolved: annulus D is resolved by fewer than 3 cells radially")
    c = reg.center
    grid = Grid.covering(c - reg.d_outer, c + reg.d_outer, h, center=c)
    r = np.linalg.norm(grid.cell_points() - c, axis=-1)
    mask = (r > reg.d_inner * (1 + 1e-9)) & (r < reg.d_outer * (1 - 1e-9))  # as in discretize
    return smallest_nonzero_eigenvalue(neumann_laplacian(mask, h)) ** -0.5


def poincare_constant_1d(cells: int = 200, length: float = 1.0) -> float:
    """Neumann Poincare constant of an interval (exact limit ``length / pi``)."""
    mask = np.ones(cells, bool)
    return smallest_nonzero_eigenvalue(neumann_laplacian(mask, length / cells)) ** -0.5


__all__ = [
    "CSV_COLUMNS", "SweepPlan", "SweepRecord", "predicted_exponent", "run_sweep", "resolution_for",
    "fit_exponent", "bound_check", "fit_report", "refinement_check", "sweep_csv", "write_sweep_csv",
    "read_sweep_csv", "neumann_laplacian", "smallest_nonzero_eigenvalue", "poincare_constant",
    "poincare_constant_1d", "build_domain",
]
