import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kfpkit.errors import DimensionError
from kfpkit.geometry import (KineticCylinder, KineticPoint, compose, compose_arrays, cylinder_contains, invert_into,
                             invert_into_arrays, inverse, japanese, kinetic_scale)

coord = st.floats(-5, 5, allow_nan=False)


def points(d):
    return st.builds(lambda t, x, v: KineticPoint(t, x, v), coord,
                     st.lists(coord, min_size=d, max_size=d), st.lists(coord, min_size=d, max_size=d))


@given(points(2), points(2), points(2))
def test_product_is_associative(a, b, c):
    assert compose(compose(a, b), c).allclose(compose(a, compose(b, c)), rtol=1e-10, atol=1e-10)


@given(points(3))
def test_inverse_gives_identity_both_sides(a):
    e = KineticPoint.origin(3)
    assert compose(a, inverse(a)).allclose(e, atol=1e-10)
    assert compose(inverse(a), a).allclose(e, atol=1e-10)


@given(points(1), points(1))
def test_invert_into_matches_inverse_then_compose(a, b):
    assert invert_into(a, b).allclose(compose(inverse(a), b), atol=1e-10)


@given(points(2), points(2), st.floats(0.1, 3.0))
def test_scaling_is_a_group_homomorphism(a, b, r):
    lhs = kinetic_scale(compose(a, b), r)
    rhs = compose(kinetic_scale(a, r), kinetic_scale(b, r))
    assert lhs.allclose(rhs, rtol=1e-10, atol=1e-9)


def test_product_formula():
    a = KineticPoint(1.0, [1.0, 2.0], [3.0, 4.0])
    b = KineticPoint(2.0, [0.5, 0.5], [1.0, 1.0])
    c = compose(a, b)
    assert c.t == 3.0
    np.testing.assert_allclose(c.x, [1.5 + 2 * 3.0, 2.5 + 2 * 4.0])
    np.testing.assert_allclose(c.v, [4.0, 5.0])


def test_array_forms_agree_with_scalar_forms(rng):
    for _ in range(20):
        a = KineticPoint(rng.normal(), rng.normal(size=2), rng.normal(size=2))
        b = KineticPoint(rng.normal(), rng.normal(size=2), rng.normal(size=2))
        t, x, v = compose_arrays(a.t, a.x, a.v, b.t, b.x, b.v)
        assert KineticPoint(t, x, v).allclose(compose(a, b))
        t, x, v = invert_into_arrays(a.t, a.x, a.v, b.t, b.x, b.v)
        assert KineticPoint(t, x, v).allclose(invert_into(a, b))


def test_dimension_mismatch_raises():
    with pytest.raises(DimensionError):
        compose(KineticPoint(0, [0.0], [0.0]), KineticPoint(0, [0.0, 0.0], [0.0, 0.0]))
    with pytest.raises(DimensionError):
        KineticPoint(0, [0.0, 1.0], [0.0])


def test_scale_rejects_nonpositive_factor():
    with pytest.raises(ValueError):
        kinetic_scale(KineticPoint.origin(1), 0.0)


def test_cylinder_membership_is_slanted():
    z0 = KineticPoint(1.0, [0.0], [2.0])
    Q = KineticCylinder(0.5, z0)
    assert cylinder_contains(Q, z0)
    # going back in time by 0.2 the centre line moves to x = -0.4
    assert cylinder_contains(Q, KineticPoint(0.8, [-0.4], [2.0]))
    assert not cylinder_contains(Q, KineticPoint(0.8, [0.0], [2.0]))
    # the top is closed, the bottom open
    assert not cylinder_contains(Q, KineticPoint(1.0 - 0.25, [-0.5], [2.0]))
    assert not cylinder_contains(Q, KineticPoint(1.01, [0.02], [2.0]))


@given(points(1), st.floats(0.2, 2.0))
def test_cylinder_is_left_translate_of_scaled_unit_cylinder(z0, r):
    Q = KineticCylinder(r, z0)
    unit = KineticCylinder(1.0)
    gen = np.random.default_rng(0)
    for _ in range(10):
        w = KineticPoint(-gen.uniform(0, 1), gen.uniform(-1, 1, 1), gen.uniform(-1, 1, 1))
        z = compose(z0, kinetic_scale(w, r))
        assert cylinder_contains(Q, z) == cylinder_contains(unit, w)


def test_japanese_bracket():
    np.testing.assert_allclose(japanese(np.array([[0.0, 0.0], [3.0, 4.0]])), [1.0, np.sqrt(26.0)])


def test_bounding_box_encloses_samples(rng):
    z0 = KineticPoint(0.3, [1.0], [-2.0])
    Q = KineticCylinder(0.7, z0)
    (tlo, thi), (xlo, xhi), (vlo, vhi) = Q.bounding_box(1)
    t = rng.uniform(tlo - 1, thi + 1, 20000)
    x = rng.uniform(xlo - 2, xhi + 2, (20000, 1))
    v = rng.uniform(vlo - 1, vhi + 1, (20000, 1))
    inside = Q.contains_arrays(t, x, v)
    assert inside.any()
    assert np.all((t[inside] >= tlo) & (t[inside] <= thi))
    assert np.all((x[inside] >= xlo) & (x[inside] <= xhi))
    assert np.all((v[inside] >= vlo) & (v[inside] <= vhi))
