import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from divinv.errors import BadExponent, EmptyRegion
from divinv.fields import (Grid, ScalarField, VectorField, cell_inner, discrete_divergence,
                           discrete_gradient, extend_by_zero, face_inner, face_masks, lq_norm,
                           read_field, w1q_seminorm, write_field, zero_mean_project)

UNIT = Grid((0.0, 0.0, 0.0), (10, 10, 10), 0.1)
SYM = Grid((-0.5, -0.5, -0.5), (10, 10, 10), 0.1)


def identity(x, y, z):
    return x, y, z


def test_covering_is_odd_and_centered():
    g = Grid.covering((-1, -1, -1), (1, 1, 1), 0.1)
    assert all(n % 2 == 1 for n in g.shape)
    mid = g.cell_points()[tuple(n // 2 for n in g.shape)]
    assert np.allclose(mid, 0.0, atol=1e-12)


def test_divergence_of_constant_is_zero():
    u = VectorField.from_function(UNIT, lambda x, y, z: (np.full_like(x, 2.0), np.full_like(y, -1.0), 0 * z))
    assert np.max(np.abs(discrete_divergence(u).values)) == 0.0


def test_divergence_of_identity_is_three():
    u = VectorField.from_function(UNIT, identity)
    assert np.allclose(discrete_divergence(u).values, 3.0, atol=1e-12)


def test_gradient_of_constant_and_affine():
    p = ScalarField(UNIT, np.full(UNIT.shape, 4.0))
    assert all(np.all(c == 0) for c in discrete_gradient(p).comps)
    a = np.array([1.5, -2.0, 0.25])
    p = ScalarField.from_function(UNIT, lambda x, y, z: a[0] * x + a[1] * y + a[2] * z)
    g = discrete_gradient(p)
    for k in range(3):
        assert np.allclose(g.comps[k][g.masks[k]], a[k], atol=1e-12)


def test_lq_norm_examples():
    one = ScalarField(UNIT, np.ones(UNIT.shape))
    for q in (1.5, 2.0, 3.0, 7.0):
        assert lq_norm(one, q) == pytest.approx(1.0, abs=1e-12)
    assert lq_norm(one * 2.0, 2.0) == pytest.approx(2.0, abs=1e-12)
    x = UNIT.cell_coords()[0]
    half = ScalarField(UNIT, (x < 0.5).astype(float))
    assert lq_norm(half, 2.0) == pytest.approx(2**-0.5, abs=1e-12)


def test_lq_norm_rejects_bad_q():
    one = ScalarField(UNIT, np.ones(UNIT.shape))
    for q in (1.0, 0.5, np.inf):
        with pytest.raises(BadExponent):
            lq_norm(one, q)


def test_w1q_examples():
    assert w1q_seminorm(VectorField.zeros(UNIT), 2.0) == 0.0
    u = VectorField.from_function(UNIT, identity)
    # d_i u_i = 1 on every in-array quotient along its own axis; the others vanish
    for q in (2.0, 3.0):
        assert w1q_seminorm(u, q) == pytest.approx(3 ** (1 / q) * 1.0, rel=1e-12)


def test_zero_mean_project():
    five = ScalarField(UNIT, np.full(UNIT.shape, 5.0))
    assert np.max(np.abs(zero_mean_project(five).values)) < 1e-13
    x = ScalarField.from_function(SYM, lambda x, y, z: x)
    assert np.max(np.abs(zero_mean_project(x).values - x.values)) < 1e-13
    with pytest.raises(EmptyRegion):
        zero_mean_project(five, np.zeros(UNIT.shape, bool))


def test_extend_by_zero_keeps_holes_zero():
    fluid = np.ones(UNIT.shape, bool)
    fluid[4:6, 4:6, 4:6] = False
    vals = np.zeros(UNIT.shape)
    vals[1, 2, 3] = 1.0 / UNIT.cell_volume
    vals[fluid] -= vals[fluid].mean()
    f = ScalarField(UNIT, vals, fluid)
    g = extend_by_zero(f, np.ones(UNIT.shape, bool))
    assert np.all(g.values[~fluid] == 0.0)
    assert abs(g.integral()) < 1e-12


def test_face_masks_need_both_cells():
    cells = np.zeros((6, 6, 6), bool)
    cells[2:4, 2:4, 2:4] = True
    fx, fy, fz = face_masks(cells)
    assert fx.sum() == 1 * 2 * 2 and fy.sum() == 4 and fz.sum() == 4
    assert not fx[0].any() and not fx[-1].any()


def test_field_roundtrip(tmp_path, rng):
    u = VectorField(UNIT, [rng.normal(size=UNIT.face_shape(a)) for a in range(3)])
    write_field(tmp_path / "u.field", u)
    v = read_field(tmp_path / "u.field")
    assert all(np.array_equal(a, b) for a, b in zip(u.comps, v.comps))
    f = ScalarField(UNIT, rng.normal(size=UNIT.shape))
    write_field(tmp_path / "f.field", f)
    assert np.array_equal(read_field(tmp_path / "f.field").values, f.values)
    (tmp_path / "bad.field").write_bytes(b"nope\n")
    with pytest.raises(ValueError):
        read_field(tmp_path / "bad.field")


G5 = Grid((0.0, 0.0, 0.0), (5, 6, 4), 0.2)


@settings(max_examples=40, deadline=None)
@given(
    p=arrays(np.float64, G5.shape, elements=st.floats(-10, 10)),
    mask=arrays(np.bool_, G5.shape),
    seed=st.integers(0, 2**31),
)
def test_gradient_is_minus_divergence_adjoint(p, mask, seed):
    """<grad p, u> = -<p, div u> for u vanishing off the interior faces of the mask."""
    masks = face_masks(mask)
    r = np.random.default_rng(seed)
    u = VectorField(G5, [r.normal(size=G5.face_shape(a)) for a in range(3)], masks)
    ps = ScalarField(G5, p, mask)
    lhs = face_inner(discrete_gradient(ps, masks), u)
    rhs = -cell_inner(ps, discrete_divergence(u, mask))
    assert lhs == pytest.approx(rhs, abs=1e-9 * (1 + abs(lhs)))


@settings(max_examples=40, deadline=None)
@given(vals=arrays(np.float64, G5.shape, elements=st.floats(-1e3, 1e3)), q=st.floats(1.1, 6.0),
       c=st.floats(-5, 5))
def test_lq_norm_is_homogeneous(vals, q, c):
    f = ScalarField(G5, vals)
    assert lq_norm(f * c, q) == pytest.approx(abs(c) * lq_norm(f, q), rel=1e-9, abs=1e-12)
