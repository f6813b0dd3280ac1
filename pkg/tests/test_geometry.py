import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from divinv.errors import (BadConfig, BadDeltas, ControlVolumesOverlap, HoleCountExceeded,
                           InclusionChainViolated, InfeasibleDeltas)
from divinv.geometry import (BaseDomain, HoleShape, HoleSpec, PerforationConfig, classify_point,
                             generate_random_config, hole_count_bound, lattice_config, load_config,
                             validate_config)

BALL = BaseDomain.ball(radius=1.0)


def cfg(holes, delta1=0.3, delta2=0.45, eps=0.25, alpha=2.0):
    hs = tuple(HoleSpec(c, HoleShape.ball(1.0)) for c in holes)
    return PerforationConfig(eps, alpha, 1.0, delta1, delta2, hs, BALL)


def test_single_hole_valid():
    dom = validate_config(cfg([(0, 0, 0)]))
    reg = dom.regions[0]
    assert dom.hole_count == 1
    assert reg.scale == pytest.approx(0.0625)
    assert reg.scale <= reg.d_inner  # eps^2 = 0.0625 <= 0.075
    assert reg.d_outer == pytest.approx(0.1125)
    assert dom.min_boundary_clearance == pytest.approx(1 - 0.1125)


def test_overlapping_control_volumes():
    with pytest.raises(ControlVolumesOverlap) as exc:
        validate_config(cfg([(0, 0, 0), (0.1, 0, 0)]))
    assert (exc.value.m, exc.value.n) == (0, 1)


def test_bad_deltas():
    with pytest.raises(BadDeltas):
        validate_config(cfg([(0, 0, 0)], delta1=0.5, delta2=0.4))


def test_control_ball_must_fit():
    with pytest.raises(InclusionChainViolated):
        validate_config(cfg([(0.95, 0, 0)]))


def test_hole_count_exceeded():
    box = BaseDomain.box(half_extents=(0.2, 0.2, 0.2))
    c = PerforationConfig(0.3, 2.0, 1.0, 0.3, 0.45, (HoleSpec((0, 0, 0), HoleShape.ball(1.0)),), box)
    with pytest.raises(HoleCountExceeded):
        validate_config(c)


@pytest.mark.parametrize("eps,base,expected", [
    (0.25, BALL, 64),
    (0.999999, BALL, 1),
    (0.5, BaseDomain.box(center=(0.5, 0.5, 0.5), half_extents=(0.5, 0.5, 0.5)), 1),
])
def test_hole_count_bound(eps, base, expected):
    assert hole_count_bound(eps, base) == expected


def test_hole_count_bound_eps_one():
    # the formula itself at eps = 1 (configs require eps < 1)
    assert math.floor(BALL.ball_equivalent) == 1


def test_random_config_valid_and_deterministic():
    a = generate_random_config(0.25, 2.0, (1.0, 0.3, 0.45), BALL, seed=7)
    b = generate_random_config(0.25, 2.0, (1.0, 0.3, 0.45), BALL, seed=7)
    dom = validate_config(a)
    assert 1 <= dom.hole_count <= 64
    assert a.to_json() == b.to_json()


def test_random_config_infeasible():
    with pytest.raises(InfeasibleDeltas):
        generate_random_config(0.25, 1.0, (1.0, 0.3, 0.45), BALL, seed=0)


def test_lattice_config_valid():
    box = BaseDomain.box(half_extents=(0.5, 0.5, 0.5))
    dom = validate_config(lattice_config(0.1, 2.0, (1.0, 0.3, 0.45), box))
    assert dom.hole_count > 8
    assert dom.min_gap > 0


def test_classify_point():
    dom = validate_config(cfg([(0, 0, 0)]))
    assert str(classify_point(dom, (0, 0, 0))) == "hole(0)"
    assert classify_point(dom, (2, 0, 0)).kind == "outside"
    r = 0.5 * (0.3 + 0.45) * 0.25
    assert str(classify_point(dom, (r, 0, 0))) == "annulus_D(0)"
    assert classify_point(dom, (0.08, 0, 0)).base == "fluid"
    assert classify_point(dom, (0.5, 0.5, 0)).kind == "fluid"


def test_config_roundtrip(tmp_path):
    c = generate_random_config(0.25, 2.0, (1.0, 0.3, 0.45), BALL, seed=3, max_holes=5)
    p = tmp_path / "c.json"
    p.write_text(c.to_json())
    assert load_config(p).to_json() == c.to_json()


def test_bad_base():
    with pytest.raises(BadConfig):
        BaseDomain.ball(radius=-1.0)
    with pytest.raises(BadConfig):
        BaseDomain.ball(radius=1.0, star_radius=2.0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), eps=st.sampled_from([0.2, 0.25, 0.3]), max_holes=st.integers(1, 8))
def test_random_configs_always_validate(seed, eps, max_holes):
    c = generate_random_config(eps, 2.0, (1.0, 0.3, 0.45), BALL, seed=seed, max_holes=max_holes)
    dom = validate_config(c)
    assert 1 <= dom.hole_count <= max_holes
    centers = dom.centers
    if len(centers) > 1:
        d = np.linalg.norm(centers[:, None] - centers[None], axis=-1)
        d[np.diag_indices(len(centers))] = np.inf
        assert d.min() > 2 * 0.45 * eps
