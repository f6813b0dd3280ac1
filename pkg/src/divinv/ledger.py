"""Exponent bookkeeping for the uniform pressure estimates.

Every quantity is computed from two independent algebraic forms and the
difference is reported as ``identity_residual``.  Boolean conditions
(admissibility, signs) are decided in exact rational arithmetic on the
binary value of the inputs, so boundary cases such as ``alpha = 3,
gamma = 3`` are classified exactly.

The perturbation exponent of the homogenization estimates is called
``delta0_exp`` and the resulting rate ``delta1_rate``; they are unrelated
to the geometric ``delta0, delta1`` of the perforation.
"""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np

from .errors import BadExponent, Delta0TooLarge, GammaRange, NotAdmissible, NotBetween


@dataclass
class LedgerResult:
    name: str
    inputs: dict
    value: float
    identity_residual: float = 0.0
    admissible: bool | None = None

    def to_dict(self) -> dict:
        """Fields plus a ``{name: value}`` entry, so e.g. ``"sigma1": 0.5`` appears verbatim."""
        d = asdict(self)
        d[self.name] = self.value
        return d


@dataclass(frozen=True)
class HomogParams:
    gamma: float
    alpha: float
    delta0_exp: float = 0.05

    def __post_init__(self):
        _check_gamma(self.gamma, upper=True)

    @property
    def beta_gamma(self) -> float:
        return 3.0 * (self.gamma - 1.0)

    @property
    def q_star(self) -> float:
        return q_bar(self.gamma)

    @property
    def admissible(self) -> bool:
        return admissible(self.gamma, self.alpha)


def _check_gamma(gamma: float, upper: bool = False):
    if not gamma > 2 or (upper and gamma > 3):
        rng = "(2, 3]" if upper else "(2, inf)"
        raise GammaRange(f"GammaRange: gamma = {gamma} outside {rng}")


def q_bar(gamma: float) -> float:
    """``(3 gamma - 3) / (2 gamma - 3)``, the dual exponent of the pressure estimate."""
    return (3.0 * gamma - 3.0) / (2.0 * gamma - 3.0)


def admissible_forms(gamma: float, alpha: float) -> tuple[float, float]:
    """Floating values of ``alpha (gamma-2)/(2 gamma-3) - 1`` and ``alpha gamma - 2 alpha - 2 gamma + 3``."""
    _check_gamma(gamma)
    return alpha * (gamma - 2.0) / (2.0 * gamma - 3.0) - 1.0, alpha * gamma - 2.0 * alpha - 2.0 * gamma + 3.0


def admissible(gamma: float, alpha: float) -> bool:
    """``alpha (gamma - 2)/(2 gamma - 3) > 1``, equivalently ``alpha gamma - 2 alpha - 2 gamma + 3 > 0``."""
    _check_gamma(gamma)
    g, a = Fraction(gamma), Fraction(alpha)
    first = a * (g - 2) / (2 * g - 3) > 1
    second = a * g - 2 * a - 2 * g + 3 > 0
    if first != second:  # pragma: no cover - the forms are equivalent for 2 gamma - 3 > 0
        raise ArithmeticError("admissibility forms disagree")
    return first


def sigma1(gamma: float, alpha: float) -> LedgerResult:
    """``((3 - qbar) alpha - 3) / qbar`` with ``qbar = (3 gamma - 3)/(2 gamma - 3)``."""
    _check_gamma(gamma)
    qb = q_bar(gamma)
    direct = ((3.0 - qb) * alpha - 3.0) / qb
    factored = (2.0 * gamma - 3.0) / (gamma - 1.0) * ((gamma - 2.0) / (2.0 * gamma - 3.0) * alpha - 1.0)
    return LedgerResult("sigma1", {"gamma": gamma, "alpha": alpha}, direct,
                        abs(direct - factored), admissible(gamma, alpha))


def interpolation_theta(target_p: float, p0: float, p1: float) -> LedgerResult:
    """``theta`` with ``1/target = (1 - theta)/p0 + theta/p1``."""
    lo, hi = min(p0, p1), max(p0, p1)
    if not lo <= target_p <= hi or p0 == p1:
        raise NotBetween(f"NotBetween: {target_p} not between {p0} and {p1}")
    theta = (1.0 / p0 - 1.0 / target_p) / (1.0 / p0 - 1.0 / p1)
    resid = abs((1.0 - theta) / p0 + theta / p1 - 1.0 / target_p)
    return LedgerResult("theta", {"target_p": target_p, "p0": p0, "p1": p1}, theta, resid)


def theta12(gamma: float) -> tuple[LedgerResult, LedgerResult]:
    """Interpolation weights of ``L^gamma`` and ``L^(2 gamma - 3)`` between ``L^1`` and ``L^(3 gamma - 3)``."""
    _check_gamma(gamma, upper=True)
    t1 = interpolation_theta(gamma, 1.0, 3.0 * gamma - 3.0)
    t2 = interpolation_theta(2.0 * gamma - 3.0, 1.0, 3.0 * gamma - 3.0)
    t1.name, t2.name = "theta1", "theta2"
    return t1, t2


def theta4_identities(gamma: float) -> LedgerResult:
    """``theta4 = (gamma - 1)/(2 (3 gamma - 4))`` from ``5/6 = (1 - theta4) + theta4/(3 gamma - 3)``.

    ``admissible`` carries the positivity ``gamma - 1 - 2 theta4 = (gamma - 1)(3 gamma - 5)/(3 gamma - 4) > 0``.
    """
    _check_gamma(gamma, upper=True)
    interp = interpolation_theta(6.0 / 5.0, 1.0, 3.0 * gamma - 3.0).value
    closed = (gamma - 1.0) / (2.0 * (3.0 * gamma - 4.0))
    gap = gamma - 1.0 - 2.0 * closed
    gap_closed = (gamma - 1.0) * (3.0 * gamma - 5.0) / (3.0 * gamma - 4.0)
    g = Fraction(gamma)
    positive = (g - 1) * (3 * g - 5) / (3 * g - 4) > 0
    return LedgerResult("theta4", {"gamma": gamma}, closed,
                        max(abs(interp - closed), abs(gap - gap_closed)), positive)


def h_of_delta0(gamma: float, alpha: float, delta0_exp: float) -> float:
    """``3 (alpha - 1)/(qbar + delta0_exp) - alpha``."""
    return 3.0 * (alpha - 1.0) / (q_bar(gamma) + delta0_exp) - alpha


def h_at_zero(gamma: float, alpha: float) -> float:
    """Closed form ``(alpha gamma - 2 alpha - 2 gamma + 3)/(gamma - 1)`` of ``h(0)``."""
    return (alpha * gamma - 2.0 * alpha - 2.0 * gamma + 3.0) / (gamma - 1.0)


def r1_and_rate(gamma: float, alpha: float, delta0_exp: float) -> dict:
    """``r1`` from ``1/r1 + 1/(qbar + delta0_exp) = 1/qbar``, ``h(delta0_exp)`` and ``min(3(alpha-1)/r1, h)``."""
    _check_gamma(gamma)
    if not admissible(gamma, alpha):
        raise NotAdmissible(f"NotAdmissible: gamma={gamma}, alpha={alpha}")
    qb = q_bar(gamma)
    inv_r1 = 1.0 / qb - 1.0 / (qb + delta0_exp)
    if inv_r1 <= 0:
        raise Delta0TooLarge(f"Delta0TooLarge: delta0_exp = {delta0_exp} gives r1 = inf (need delta0_exp > 0)")
    r1 = 1.0 / inv_r1
    h = h_of_delta0(gamma, alpha, delta0_exp)
    if r1 <= 1 or h <= 0:
        raise Delta0TooLarge(f"Delta0TooLarge: delta0_exp = {delta0_exp} gives r1 = {r1:.6g}, h = {h:.6g}")
    return {
        "r1": r1,
        "h": h,
        "delta1_rate": min(3.0 * (alpha - 1.0) / r1, h),
        "identity_residual": abs(1.0 / r1 + 1.0 / (qb + delta0_exp) - 1.0 / qb),
        "h0": h_at_zero(gamma, alpha),
        "h0_residual": abs(h_of_delta0(gamma, alpha, 0.0) - h_at_zero(gamma, alpha)),
    }


def ge_exponents(q: float, alpha: float) -> dict:
    """Exponents of ``||1 - g||_q`` and ``||grad g||_q``."""
    if not q >= 1:
        raise BadExponent(f"BadExponent: q = {q} < 1")
    e = 3.0 * (alpha - 1.0) / q
    return {"e_one_minus_g": e, "e_grad_g": e - alpha}


def beta1_terms(gamma: float) -> dict:
    """Right-hand exponents of the four pressure-estimate terms; all must stay below ``3 gamma - 3``."""
    t1, t2 = (t.value for t in theta12(gamma))
    t4 = theta4_identities(gamma).value
    top = 3.0 * gamma - 3.0
    terms = {
        "I1_max": max(t1, t2) * top,
        "I1_sum": t1 * gamma + t2 * (2.0 * gamma - 3.0),
        "I2": 2.0 * gamma - 2.0,
        "I3": top - (gamma - 1.0) * (3.0 * gamma - 5.0) / (3.0 * gamma - 4.0),
        "I4": 2.0 * gamma - 2.0,
    }
    # theta3 solves the same relation as theta4
    terms["I3_direct"] = top - (gamma - 1.0 - 2.0 * t4)
    return terms


def beta1(gamma: float) -> LedgerResult:
    terms = beta1_terms(gamma)
    b = max(terms["I1_max"], terms["I1_sum"], terms["I2"], terms["I3"], terms["I4"])
    return LedgerResult("beta1", {"gamma": gamma}, b, abs(terms["I3"] - terms["I3_direct"]),
                        bool(b < 3.0 * gamma - 3.0))


def report(gamma: float, alpha: float, delta0_exp: float | None = None) -> list:
    """Every ledger quantity for one ``(gamma, alpha)`` pair, as a list of LedgerResult."""
    out = []
    ok = admissible(gamma, alpha)
    f1, f2 = admissible_forms(gamma, alpha)
    # (2 gamma - 3) * form_ratio == form_poly
    out.append(LedgerResult("admissible", {"gamma": gamma, "alpha": alpha}, float(ok),
                            abs(f1 * (2.0 * gamma - 3.0) - f2), ok))
    out.append(sigma1(gamma, alpha))
    if gamma <= 3:
        out.extend(theta12(gamma))
        out.append(theta4_identities(gamma))
        out.append(beta1(gamma))
    qb = q_bar(gamma)
    ge = ge_exponents(qb, alpha)
    out.append(LedgerResult("ge_exponent_grad", {"q": qb, "alpha": alpha}, ge["e_grad_g"],
                            abs(ge["e_grad_g"] - h_at_zero(gamma, alpha)), ok))
    out.append(LedgerResult("h0", {"gamma": gamma, "alpha": alpha}, h_at_zero(gamma, alpha),
                            abs(h_of_delta0(gamma, alpha, 0.0) - h_at_zero(gamma, alpha)), ok))
    if delta0_exp is not None:
        r = r1_and_rate(gamma, alpha, delta0_exp)
        inputs = {"gamma": gamma, "alpha": alpha, "delta0_exp": delta0_exp}
        out.append(LedgerResult("r1", inputs, r["r1"], r["identity_residual"], ok))
        out.append(LedgerResult("h", inputs, r["h"], 0.0, ok))
        out.append(LedgerResult("delta1_rate", inputs, r["delta1_rate"], 0.0, ok))
    return out


def scan(gammas=None, alphas=None) -> list:
    """Admissibility map over a (gamma, alpha) rectangle."""
    gammas = np.linspace(2.01, 3.0, 100) if gammas is None else gammas
    alphas = np.linspace(1.0, 10.0, 100) if alphas is None else alphas
    rows = []
    for g in gammas:
        for a in alphas:
            f1, f2 = admissible_forms(float(g), float(a))
            rows.append({
                "gamma": float(g),
                "alpha": float(a),
                "admissible": admissible(float(g), float(a)),
                "sigma1": sigma1(float(g), float(a)).value,
                "form_ratio": f1,
                "form_poly": f2,
            })
    return rows


def scan_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["gamma", "alpha", "admissible", "sigma1"])
    for r in rows:
        w.writerow([repr(r["gamma"]), repr(r["alpha"]), int(r["admissible"]), repr(r["sigma1"])])
    return buf.getvalue()
