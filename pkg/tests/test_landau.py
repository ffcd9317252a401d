import math

import numpy as np
import pytest

from kfpkit.errors import PreconditionError
from kfpkit.geometry import KineticPoint
from kfpkit.landau import (LandauBudget, LandauParams, VelocityProfile, check_abar_holder_scaling, frame_grid,
                           landau_abar, landau_cbar, make_scaling_frame, rescale_field, rough_x_density,
                           split_eigenvalues, transformed_coefficients, verify_ellipticity_bounds)


def test_indicator_closed_forms_at_center():
    h = VelocityProfile.indicator()
    p = LandauParams(-2.0)
    a = landau_abar(p, h, [0.0, 0.0, 0.0]).value
    np.testing.assert_allclose(a, 8 * math.pi / 9 * np.eye(3), rtol=1e-6, atol=1e-12)
    assert landau_cbar(p, h, [0.0, 0.0, 0.0]).value == pytest.approx(4 * math.pi, rel=1e-6)


def test_indicator_far_field():
    # outside the ball with gamma = -2 the kernel |w|^0 (I - w w / |w|^2) integrates against h exactly
    # along v: the parallel entry vanishes to leading order, perpendicular ~ vol(B) = 4 pi / 3
    h = VelocityProfile.indicator()
    a = landau_abar(LandauParams(-2.0), h, [40.0, 0.0, 0.0]).value
    assert a[0, 0] < 1e-2 * a[1, 1]
    assert a[1, 1] == pytest.approx(4 * math.pi / 3, rel=1e-3)


def test_coulomb_case_uses_local_value():
    h = VelocityProfile.maxwellian()
    v = np.array([0.3, -0.2, 0.5])
    assert landau_cbar(LandauParams(-3.0), h, v).value == pytest.approx(float(h(v)), rel=1e-15)


def test_abar_is_symmetric_psd_and_rotation_equivariant():
    h = VelocityProfile.maxwellian()
    p = LandauParams(-1.0)
    v = np.array([1.0, 0.5, -0.3])
    a = landau_abar(p, h, v).value
    np.testing.assert_allclose(a, a.T, atol=1e-14)
    assert np.linalg.eigvalsh(a).min() > 0
    c, s = math.cos(0.7), math.sin(0.7)
    R = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
    np.testing.assert_allclose(landau_abar(p, h, R @ v).value, R @ a @ R.T, rtol=1e-6, atol=1e-9)


def test_shift_covariance():
    h = VelocityProfile.maxwellian()
    p = LandauParams(-2.0)
    u = np.array([0.5, 0.0, -1.0])
    v = np.array([0.2, 0.4, 0.1])
    np.testing.assert_allclose(landau_abar(p, h.shifted(u), v + u).value, landau_abar(p, h, v).value, rtol=1e-7)


def test_error_estimate_is_small():
    res = landau_abar(LandauParams(-2.5), VelocityProfile.maxwellian(), [0.1, 0.2, 0.3])
    assert res.error < 1e-6 * np.max(np.abs(res.value))


def test_ellipticity_slopes_for_maxwellian():
    speeds = np.geomspace(2, 16, 8)
    vs = speeds[:, None] * np.array([1.0, 2.0, 2.0]) / 3.0
    rep = verify_ellipticity_bounds(LandauParams(-1.0), VelocityProfile.maxwellian(), vs)
    assert rep.ok
    assert rep.slopes["parallel"] == pytest.approx(-1.0, abs=0.1)
    assert rep.slopes["perp_min"] == pytest.approx(1.0, abs=0.1)


def test_split_eigenvalues():
    a = np.diag([1.0, 2.0, 3.0])
    par, perp = split_eigenvalues(a, [1.0, 0.0, 0.0])
    assert par == 1.0
    np.testing.assert_allclose(perp, [2.0, 3.0])


def test_params_validation():
    with pytest.raises(PreconditionError):
        LandauParams(-3.5)
    with pytest.raises(PreconditionError):
        LandauParams(0.0)


def test_frame_is_identity_at_rest():
    fr = make_scaling_frame(KineticPoint(0.5, np.zeros(3), np.zeros(3)), -2.0)
    np.testing.assert_array_equal(fr.S, np.eye(3))
    assert fr.r0 == pytest.approx(0.5)


def test_frame_stretches_along_velocity():
    v0 = np.array([0.0, 0.0, 10.0])
    fr = make_scaling_frame(KineticPoint(1.0, np.zeros(3), v0), -1.0)
    jb = math.sqrt(101.0)
    np.testing.assert_allclose(np.linalg.eigvalsh(fr.S), sorted([jb**-0.5, jb**0.5, jb**0.5]), rtol=1e-12)
    assert fr.r0 == pytest.approx(jb**-0.5 * math.sqrt(0.5))


def test_frame_round_trip(rng):
    fr = make_scaling_frame(KineticPoint(0.2, rng.normal(size=3), rng.normal(size=3) * 5), -2.5)
    t = rng.uniform(-1, 0, 10)
    x, v = rng.normal(size=(10, 3)), rng.normal(size=(10, 3))
    tt, xx, vv = fr.inverse_map(*fr.forward(t, x, v))
    np.testing.assert_allclose(tt, t, atol=1e-12)
    np.testing.assert_allclose(xx, x, atol=1e-9)
    np.testing.assert_allclose(vv, v, atol=1e-10)


def test_rescale_of_linear_velocity():
    z0 = KineticPoint(0.5, np.zeros(1), np.array([2.0]))
    fr = make_scaling_frame(z0, -2.0)
    out = rescale_field(lambda x, v: v[..., 0], fr, n=5)
    _, v = out.mesh()
    np.testing.assert_allclose(out.values, fr.r0 * v[..., 0] * fr.S[0, 0] + 2.0, atol=1e-12)


def test_transformed_coefficients_are_well_conditioned():
    h = VelocityProfile.maxwellian()
    for speed in (0.0, 4.0):
        fr = make_scaling_frame(KineticPoint(0.1, np.zeros(3), np.array([speed, 0, 0])), -2.0)
        tc = transformed_coefficients(LandauParams(-2.0), rough_x_density(h, 0.5), fr, frame_grid(3, 3),
                                      LandauBudget(estimate_error=False))
        assert tc.cond_max <= 50


def test_abar_holder_scaling_slope():
    rep = check_abar_holder_scaling(LandauParams(-2.0), rough_x_density(VelocityProfile.maxwellian(), 0.5),
                                    [0.01, 0.1, 1.0], [0.0, 0.0, 0.0], 0.5, n=21,
                                    budget=LandauBudget(estimate_error=False))
    assert rep.ok
