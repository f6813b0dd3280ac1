import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import single_hole
from divinv.errors import ExponentRange, InfeasibleDeltas, TooFewPoints, UnderResolved
from divinv.harness import (SweepPlan, SweepRecord, bound_check, fit_exponent, fit_report, neumann_laplacian,
                            poincare_constant, poincare_constant_1d, predicted_exponent, read_sweep_csv,
                            refinement_check, resolution_for, run_sweep, smallest_nonzero_eigenvalue,
                            sweep_csv, write_sweep_csv)
from divinv.geometry import BaseDomain, HoleShape, single_hole_config, validate_config


def records(eps, ratios, q=2.5, alpha=2.0):
    return [SweepRecord(e, q, alpha, 10, r, 1e-12, 0.0) for e, r in zip(eps, ratios)]


EPS = [0.3, 0.2, 0.15, 0.1]


def small_plan(**kw):
    d = dict(epsilons=[0.3, 0.25, 0.2], q_list=[2.0, 2.5], alpha=2.0, deltas=(1.2, 0.4, 0.7))
    d.update(kw)
    return SweepPlan(**d)


def test_predicted_exponent_examples():
    assert predicted_exponent(2.0, 3.0) == 0.0
    assert predicted_exponent(2.5, 2.0) == pytest.approx(-0.8, abs=1e-15)
    assert predicted_exponent(2.0, 4.0) == 0.5
    with pytest.raises(ExponentRange):
        predicted_exponent(3.5, 2.0)
    with pytest.warns(UserWarning):
        predicted_exponent(3.5, 2.0, allow_outside=True)
    with pytest.raises(ExponentRange):
        predicted_exponent(2.0, 0.5)


def test_fit_exponent_exact_power_law():
    fit = fit_exponent(records(EPS, [e**-0.8 for e in EPS]))
    assert fit["slope"] == pytest.approx(-0.8, abs=1e-12)
    assert fit_exponent(records(EPS, [4.0] * 4))["slope"] == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(TooFewPoints):
        fit_exponent(records(EPS[:2], [1, 2]))


def test_bound_check():
    law = records(EPS, [2.0 * (1 + e**-0.8) for e in EPS])
    assert bound_check(law, -0.8)["passed"]
    bad = records(EPS, [2.0 * (1 + e**-0.8) for e in EPS])
    bad[-1].ratio *= 10  # eps = 0.1; the largest eps calibrates C
    res = bound_check(bad, -0.8)
    assert not res["passed"]
    assert [r["pass"] for r in res["records"]].count(False) == 1
    uni = bound_check(records(EPS, [1.0, 1.5, 1.2, 1.1], q=2.0, alpha=3.0), 0.0)
    assert uni["rule"] == "uniform" and uni["passed"]
    assert not bound_check(records(EPS, [1.0, 2.5, 1.2, 1.1]), 0.0)["passed"]


def test_fit_report_on_synthetic():
    rep = fit_report(records(EPS, [e**-0.8 for e in EPS]), 2.5, 2.0)
    assert rep["predicted"] == pytest.approx(-0.8)
    assert rep["slope"] == pytest.approx(-0.8, abs=1e-12)
    assert rep["bound_check_passed"]


def test_empty_sweep():
    assert run_sweep(small_plan(epsilons=[])) == []


def test_geometry_errors_surface_first():
    plan = small_plan(epsilons=[0.3], alpha=1.0, deltas=(1.0, 0.3, 0.45))
    with pytest.raises(InfeasibleDeltas):
        run_sweep(plan)


def test_cap_rejects_plan():
    with pytest.raises(UnderResolved):
        resolution_for(small_plan(max_cells=20**3))


def test_sweep_records_and_determinism(tmp_path):
    plan = small_plan()
    a = run_sweep(plan)
    b = run_sweep(plan, threads=2)
    assert len(a) == 6
    assert [(r.epsilon, r.q) for r in a] == sorted((e, q) for e in plan.epsilons for q in plan.q_list)
    assert all(r.residual <= plan.tol for r in a)
    assert sweep_csv(a) == sweep_csv(b)
    write_sweep_csv(a, tmp_path / "s.csv")
    back = read_sweep_csv(tmp_path / "s.csv")
    assert [(r.epsilon, r.q, r.ratio) for r in back] == [(r.epsilon, r.q, r.ratio) for r in a]
    assert all(math.isnan(r.seconds) for r in back)
    timed = sweep_csv(a, timing=True)
    assert "nan" not in timed


def test_plan_roundtrip():
    plan = small_plan(layout="random", seed=4)
    again = SweepPlan.from_dict(plan.to_dict())
    assert again.to_dict() == plan.to_dict()


def test_refinement_check():
    res = refinement_check(small_plan(epsilons=[0.3], q_list=[2.0]), 0.3)
    assert res["change"] < 0.1


def test_poincare_1d():
    assert poincare_constant_1d() == pytest.approx(1 / math.pi, rel=1e-3)
    assert poincare_constant_1d(length=2.0) == pytest.approx(2 / math.pi, rel=1e-3)


def test_poincare_scaling():
    ball = BaseDomain.ball(radius=1.0)
    c = []
    for eps in (0.2, 0.1):
        dom = validate_config(single_hole_config(eps, 2.0, (1.0, 0.3, 0.45), ball, HoleShape.ball(0.5)))
        c.append(poincare_constant(dom, resolution=20))
    assert c[0] / c[1] == pytest.approx(2.0, rel=1e-6)


def test_laplacian_kernel_is_constants():
    mask = np.ones((5, 4, 3), bool)
    L = neumann_laplacian(mask, 0.5)
    assert np.allclose(L @ np.ones(L.shape[0]), 0.0)
    # box [0, 2.5] x [0, 2] x [0, 1.5]: smallest nonzero discrete eigenvalue along the longest side
    lam = smallest_nonzero_eigenvalue(L)
    assert lam == pytest.approx((2 - 2 * math.cos(math.pi / 5)) / 0.25, rel=1e-8)


@settings(max_examples=30, deadline=None)
@given(e=st.floats(-1.5, -0.1), c=st.floats(0.1, 10.0))
def test_power_law_fits_exactly(e, c):
    fit = fit_exponent(records(EPS, [c * x**e for x in EPS]))
    assert fit["slope"] == pytest.approx(e, abs=1e-10)
    assert bound_check(records(EPS, [c * (1 + x**e) for x in EPS]), e)["passed"]
