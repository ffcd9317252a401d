import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kfpkit.errors import EllipticityError, PreconditionError
from kfpkit.matrices import (TimeMatrixProfile, assemble_matrices, load_profile, loglog_slope, mtam, p_bracket,
                             profile_from_dict, verify_matrix_bounds, verify_p_dynamics)


@pytest.mark.parametrize("d", [1, 2, 3])
@pytest.mark.parametrize("t", [1e-3, 0.5, 7.0])
def test_identity_closed_forms(d, t):
    km = assemble_matrices(TimeMatrixProfile.identity(d), t)
    I = np.eye(d)
    np.testing.assert_allclose(km.A0, t * I, rtol=1e-14)
    np.testing.assert_allclose(km.A1, t**2 / 2 * I, rtol=1e-14)
    np.testing.assert_allclose(km.A2, t**3 / 3 * I, rtol=1e-14)
    np.testing.assert_allclose(km.P, t**3 / 12 * I, rtol=1e-12)
    np.testing.assert_allclose(km.M, t / 2 * I, rtol=1e-12, atol=1e-15)


def test_constant_matrix_scales_every_functional():
    a = np.array([[2.0, 0.3], [0.3, 1.0]])
    km = assemble_matrices(TimeMatrixProfile.constant(a), 2.0)
    np.testing.assert_allclose(km.P, 8.0 / 12 * a, rtol=1e-12)
    np.testing.assert_allclose(km.M, np.eye(2), rtol=1e-12, atol=1e-14)


def test_piecewise_integrals_are_exact():
    prof = TimeMatrixProfile.piecewise([0.5], [[[1.0]], [[2.0]]], lam=2.0)
    km = assemble_matrices(prof, 1.0)
    # A0 = 0.5 + 2 * 0.5, A1 = 0.125 + 2 * 0.375, A2 = 1/24 + 2 * 7/24
    assert km.A0[0, 0] == pytest.approx(1.5, rel=1e-15)
    assert km.A1[0, 0] == pytest.approx(0.875, rel=1e-15)
    assert km.A2[0, 0] == pytest.approx(15 / 24, rel=1e-15)


def test_smooth_profile_quadrature_matches_closed_form():
    prof = TimeMatrixProfile.smooth(lambda s: np.array([[1.5 + 0.5 * np.sin(s)]]), lam=2.0, dim=1, horizon=3.0)
    t = 2.0
    km = assemble_matrices(prof, t)
    A0 = 1.5 * t + 0.5 * (1 - np.cos(t))
    A1 = 0.75 * t**2 + 0.5 * (np.sin(t) - t * np.cos(t))
    assert km.A0[0, 0] == pytest.approx(A0, rel=1e-10)
    assert km.A1[0, 0] == pytest.approx(A1, rel=1e-10)


@given(st.integers(0, 10_000), st.floats(1.0, 4.0), st.floats(1e-3, 5.0))
def test_p_stays_in_its_bracket(seed, lam, t):
    prof = TimeMatrixProfile.seeded(seed, 8, lam, dim=2)
    km = assemble_matrices(prof, t)
    lo, hi = p_bracket(lam)
    eig = np.linalg.eigvalsh(km.P) / t**3
    assert eig.min() >= lo * (1 - 1e-10)
    assert eig.max() <= hi * (1 + 1e-10)


def test_bound_report_shapes_and_bracket():
    prof = TimeMatrixProfile.seeded(4, 16, 2.0, dim=2)
    rep = verify_matrix_bounds(prof, np.geomspace(1e-3, 1, 20), np.eye(2))
    assert not rep.violation
    assert rep.p_ratio.shape == (20, 2)
    assert len(list(rep.rows())) == 40
    assert set(rep.summary()) >= {"c_lo", "c_hi", "slope_min", "slope_max", "violation"}


def test_loglog_slope_of_power_law():
    t = np.geomspace(1e-2, 1, 9)
    assert loglog_slope(t, 3 * t**2.5) == pytest.approx(2.5, abs=1e-12)


def test_pdot_equals_mtam_with_second_order_differences():
    prof = TimeMatrixProfile.seeded(2, 6, 2.0, dim=2)
    safe = [t for t in np.linspace(0.05, 0.95, 40) if not prof.near_breakpoint(t, 0.011 * t)][:5]
    rep = verify_p_dynamics(prof, safe)
    assert rep.psd
    order = rep.observed_order[rep.err_h2 > 1e-11]
    assert np.all(order > 1.8)
    assert np.all(rep.err_richardson <= rep.err_h2 + 1e-12)


def test_mtam_is_positive_semidefinite():
    prof = TimeMatrixProfile.seeded(9, 10, 3.0, dim=3)
    for t in [0.01, 0.3, 2.0]:
        km = assemble_matrices(prof, t)
        assert np.linalg.eigvalsh(mtam(prof, km, t)).min() >= -1e-12


def test_stencil_across_breakpoint_is_rejected():
    prof = TimeMatrixProfile.piecewise([0.5], [[[1.0]], [[2.0]]], lam=2.0)
    with pytest.raises(PreconditionError):
        verify_p_dynamics(prof, [0.5])


def test_ellipticity_is_enforced():
    with pytest.raises(EllipticityError):
        TimeMatrixProfile.piecewise([0.5], [[[1.0]], [[5.0]]], lam=2.0)
    with pytest.raises(EllipticityError):
        TimeMatrixProfile("constant", 0.5, 1, np.zeros(0), np.ones((1, 1, 1)))


def test_seeded_profiles_are_reproducible():
    a = TimeMatrixProfile.seeded(7, 16, 2.0, dim=2)
    b = TimeMatrixProfile.seeded(7, 16, 2.0, dim=2)
    c = TimeMatrixProfile.seeded(8, 16, 2.0, dim=2)
    assert np.array_equal(a.matrices, b.matrices) and np.array_equal(a.breakpoints, b.breakpoints)
    assert not np.array_equal(a.matrices, c.matrices)


def test_json_round_trip(tmp_path):
    for prof in [TimeMatrixProfile.seeded(3, 5, 2.0, dim=2),
                 TimeMatrixProfile.piecewise([0.2, 0.7], [[[1.0]], [[1.5]], [[0.8]]], lam=2.0),
                 TimeMatrixProfile.identity(2)]:
        path = tmp_path / "p.json"
        path.write_text(json.dumps(prof.to_dict()))
        back = load_profile(path)
        for t in [0.1, 0.5, 0.9]:
            np.testing.assert_array_equal(back.value(t), prof.value(t))


def test_documented_json_shapes():
    p = profile_from_dict({"kind": "piecewise", "breakpoints": [0.5], "matrices": [[[1.0]], [[2.0]]], "lambda": 2.0})
    assert p.value(0.7)[0, 0] == 2.0
    q = profile_from_dict({"kind": "seeded", "seed": 42, "segments": 16, "lambda": 2.0})
    assert q.matrices.shape == (16, 1, 1)


def test_mean_value_is_exact_for_piecewise():
    prof = TimeMatrixProfile.piecewise([0.5], [[[1.0]], [[2.0]]], lam=2.0)
    assert prof.mean_value(0.25, 0.75)[0, 0] == pytest.approx(1.5, rel=1e-15)


def test_shifted_profile():
    prof = TimeMatrixProfile.seeded(1, 8, 2.0)
    sh = prof.shifted(0.3)
    for s in [0.05, 0.2, 0.6]:
        np.testing.assert_array_equal(sh.value(s), prof.value(s + 0.3))
