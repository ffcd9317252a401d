import math

import numpy as np
import pytest

from kfpkit.errors import PreconditionError
from kfpkit.kernel import (MomentSpec, QuadratureBudget, chapman_kolmogorov_check, eval_kernel, eval_kernel_derivative,
                           eval_kolmogorov, kernel_value, moment_integral, moment_scaling_scan)
from kfpkit.matrices import TimeMatrixProfile


@pytest.mark.parametrize("d", [1, 2, 3])
def test_reduction_to_kolmogorov(d, rng):
    prof = TimeMatrixProfile.identity(d)
    for t in [1e-3, 0.3, 4.0]:
        x = rng.normal(size=(500, d)) * t**1.5
        v = rng.normal(size=(500, d)) * t**0.5
        np.testing.assert_allclose(kernel_value(prof, t, x, v), eval_kolmogorov(t, x, v), rtol=1e-12)


def test_quarter_factor_on_the_x_form():
    # a = I, d = 1, t = 1: Gamma(1, x, 0) = sqrt(3)/(2 pi) exp(-3 x^2); without the 1/4 it would be exp(-12 x^2)
    val = kernel_value(TimeMatrixProfile.identity(1), 1.0, [[0.5]], [[0.0]])[0]
    assert val == pytest.approx(math.sqrt(3) / (2 * math.pi) * math.exp(-0.75), rel=1e-14)


def test_kernel_vanishes_for_nonpositive_time():
    prof = TimeMatrixProfile.seeded(0, 4, 2.0)
    assert np.all(eval_kernel(prof, 0.0, [[0.1]], [[0.2]]).value == 0)
    assert np.all(eval_kernel(prof, -1.0, [[0.1]], [[0.2]]).value == 0)


def test_kernel_is_positive(rng):
    prof = TimeMatrixProfile.seeded(5, 16, 2.0, dim=2)
    vals = kernel_value(prof, 0.7, rng.normal(size=(1000, 2)), rng.normal(size=(1000, 2)))
    assert np.all(vals > 0)


def test_velocity_derivative_against_richardson_difference():
    prof = TimeMatrixProfile.identity(1)
    exact = eval_kernel_derivative(prof, 1.0, [[0.0]], [[1.0]], alpha=(1,))[0]

    def fd(h):
        return (eval_kolmogorov(1.0, [[0.0]], [[1.0 + h]]) - eval_kolmogorov(1.0, [[0.0]], [[1.0 - h]]))[0] / (2 * h)

    e1, e2 = abs(fd(1e-3) - exact), abs(fd(5e-4) - exact)
    assert e2 < e1
    assert e1 / e2 == pytest.approx(4.0, rel=0.05)
    assert abs((4 * fd(5e-4) - fd(1e-3)) / 3 - exact) < 1e-10


@pytest.mark.parametrize("alpha,beta", [((2,), (0,)), ((1,), (1,)), ((0,), (1,))])
def test_mixed_derivatives_match_differences(alpha, beta):
    prof = TimeMatrixProfile.seeded(3, 8, 2.0)
    t, x0, v0 = 0.6, 0.1, -0.3
    exact = eval_kernel_derivative(prof, t, [[x0]], [[v0]], alpha=alpha, beta=beta)[0]
    h = 1e-4

    def f(x, v):
        return kernel_value(prof, t, [[x]], [[v]])[0]

    def dv(g):
        return lambda x, v: (g(x, v + h) - g(x, v - h)) / (2 * h)

    def dx(g):
        return lambda x, v: (g(x + h, v) - g(x - h, v)) / (2 * h)

    g = f
    for _ in range(beta[0]):
        g = dx(g)
    for _ in range(alpha[0]):
        g = dv(g)
    assert g(x0, v0) == pytest.approx(exact, rel=1e-5, abs=1e-8)


def test_time_derivative_solves_the_equation():
    """Analytic d_t Gamma against a finite difference in t for a smooth profile."""
    prof = TimeMatrixProfile.smooth(lambda s: np.array([[1.5 + 0.4 * np.sin(3 * s)]]), lam=2.0, dim=1, horizon=2.0)
    t, h = 0.8, 1e-4
    x, v = np.array([[0.2], [-0.1]]), np.array([[0.5], [0.3]])
    exact = eval_kernel_derivative(prof, t, x, v, j=1)
    fd = (kernel_value(prof, t + h, x, v) - kernel_value(prof, t - h, x, v)) / (2 * h)
    np.testing.assert_allclose(exact, fd, rtol=1e-6)


def test_time_derivative_rejected_at_breakpoint():
    prof = TimeMatrixProfile.piecewise([0.5], [[[1.0]], [[2.0]]], lam=2.0)
    with pytest.raises(PreconditionError):
        eval_kernel_derivative(prof, 0.5, [[0.0]], [[0.0]], j=1)


def test_derivative_depth_limit():
    with pytest.raises(PreconditionError):
        eval_kernel_derivative(TimeMatrixProfile.identity(1), 1.0, [[0.0]], [[0.0]], alpha=(3,), beta=(1,))


def test_zeroth_derivative_is_the_kernel(rng):
    prof = TimeMatrixProfile.seeded(1, 8, 2.0, dim=2)
    x, v = rng.normal(size=(50, 2)), rng.normal(size=(50, 2))
    np.testing.assert_allclose(eval_kernel_derivative(prof, 0.4, x, v), kernel_value(prof, 0.4, x, v), rtol=1e-13)


def test_absolute_velocity_moment_closed_form():
    res = moment_integral(TimeMatrixProfile.identity(1), 1.0, MomentSpec(s=1))
    assert res.value == pytest.approx(2 / math.sqrt(math.pi), rel=1e-6)


def test_velocity_derivative_integrates_to_zero():
    # signed integral: compare the moment of |d_v Gamma| with the split halves by symmetry
    prof = TimeMatrixProfile.identity(1)
    from kfpkit.kernel import _tensor_grid
    from kfpkit.matrices import assemble_matrices

    km = assemble_matrices(prof, 1.0)
    half = [12 * math.sqrt(2 * km.P[0, 0]), 12 * math.sqrt(2 * km.A0[0, 0])]
    pts, w = _tensor_grid(half, 257)
    v = pts[:, 1:]
    x = pts[:, :1] + v @ km.M
    total = np.sum(w * eval_kernel_derivative(prof, 1.0, x, v, alpha=(1,)))
    assert abs(total) < 1e-6


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("t", [1e-3, 1e-1, 1.0, 10.0])
def test_normalization_for_rough_profiles(seed, t):
    prof = TimeMatrixProfile.seeded(seed, 16, 2.0)
    assert moment_integral(prof, t, MomentSpec()).value == pytest.approx(1.0, abs=1e-6)


def test_scan_slopes_for_identity():
    rep = moment_scaling_scan(TimeMatrixProfile.identity(1), [MomentSpec(), MomentSpec(s=1), MomentSpec(alpha=(1,))],
                              np.geomspace(1e-2, 1, 7), QuadratureBudget(n0=33))
    np.testing.assert_allclose(rep.slopes, [0.0, 0.5, -0.5], atol=0.01)
    assert rep.ok
    row = next(rep.rows())
    assert set(row) == {"spec_id", "t", "value", "error_estimate", "slope", "predicted", "deviation"}


def test_scan_needs_two_decades():
    with pytest.raises(PreconditionError):
        moment_scaling_scan(TimeMatrixProfile.identity(1), [MomentSpec()], [0.1, 1.0])


def test_second_velocity_derivative_slope_for_rough_profile():
    rep = moment_scaling_scan(TimeMatrixProfile.seeded(0, 16, 2.0), [MomentSpec(alpha=(2,))],
                              np.geomspace(1e-2, 1, 7), QuadratureBudget(n0=33))
    assert abs(rep.slopes[0] + 1) <= 0.1


def test_semigroup_identity():
    rep = chapman_kolmogorov_check(TimeMatrixProfile.identity(1), 0.5, 0.5, np.linspace(-0.5, 0.5, 10)[:, None],
                                   np.linspace(-1, 1, 10)[:, None], n=128)
    assert rep.max_rel_error <= 1e-4


def test_semigroup_rejects_time_dependent_profile():
    with pytest.raises(PreconditionError):
        chapman_kolmogorov_check(TimeMatrixProfile.seeded(0, 4, 2.0), 0.5, 0.5, [[0.0]], [[0.0]])


def test_semigroup_skips_underflowing_points():
    rep = chapman_kolmogorov_check(TimeMatrixProfile.identity(1), 0.5, 0.5, [[0.0], [200.0]], [[0.0], [0.0]], n=64)
    assert rep.skipped[1] and not rep.skipped[0]


def test_moment_spec_json():
    spec = MomentSpec.from_dict({"j": 1, "alpha": [0], "beta": [0], "shift_max": True})
    assert spec.j == 1 and spec.shift_max
    assert spec.predicted_exponent == -1.0
