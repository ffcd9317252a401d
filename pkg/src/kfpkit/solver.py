"""Solvers for (d_t + v.grad_x) f = Tr(a D_v^2 f) + c f + g.

Two routes:

* kernel solvers for coefficients depending on t only, built on the
  Gaussian fundamental solution (initial value and Duhamel forcing);
* an explicit finite-difference solver for fully variable coefficients,
  periodic in x, with a flux-limited transport step, a centred diffusion
  step and an exactly integrated reaction step (Lie splitting).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import ndimage

from . import _kernels
from .errors import CFLError, EllipticityError, NumericalFailure, PreconditionError, QuadratureError
from .grid import GridField
from .kernel import log_normalization
from .matrices import TimeMatrixProfile, assemble_matrices
from .quadrature import gauss_hermite_tensor

# ---------------------------------------------------------------------------
# Coefficients


def _field_value(spec, t, x, v, shape):
    """Evaluate a scalar coefficient given as a number or a callable(t, x, v)."""
    if spec is None:
        return np.zeros(shape)
    if callable(spec):
        return np.broadcast_to(np.asarray(spec(t, x, v), float), shape)
    return np.full(shape, float(spec))


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """a, c, g (and an optional drift b in front of grad_v) for the FD solver.

    ``a`` is a TimeMatrixProfile (t only), a constant d x d matrix, or a
    callable (t, x, v) -> (..., d, d). ``c``, ``g`` are numbers or callables
    (t, x, v) -> (...). ``b`` is a callable (t, x, v) -> (..., d); its term
    b.grad_v f is folded into the forcing.
    """

    a: object
    c: object = 0.0
    g: object = 0.0
    b: Callable | None = None
    lam: float = 1.0
    check: bool = True

    @property
    def time_only(self) -> bool:
        return isinstance(self.a, TimeMatrixProfile) or not callable(self.a)

    def diffusion(self, t0: float, t1: float, x, v, d: int) -> np.ndarray:
        """a on the step [t0, t1]: the exact time average for t-only profiles."""
        shape = x.shape[:-1]
        if isinstance(self.a, TimeMatrixProfile):
            a = np.broadcast_to(self.a.mean_value(t0, t1), shape + (d, d))
        elif callable(self.a):
            a = np.asarray(self.a(0.5 * (t0 + t1), x, v), float)
            a = np.broadcast_to(a, shape + (d, d))
        else:
            a = np.broadcast_to(np.asarray(self.a, float).reshape(d, d), shape + (d, d))
        if self.check:
            self._check(a)
        return a

    def _check(self, a):
        eig = np.linalg.eigvalsh(0.5 * (a + np.swapaxes(a, -1, -2)))
        slack = 1e-12 * self.lam
        if eig.min() < 1.0 / self.lam - slack or eig.max() > self.lam + slack:
            raise EllipticityError(
                f"a leaves [1/Lambda, Lambda] with Lambda={self.lam}: [{eig.min():.4g}, {eig.max():.4g}]")

    def reaction(self, t, x, v, shape):
        c = _field_value(self.c, t, x, v, shape)
        g = _field_value(self.g, t, x, v, shape)
        if self.check and (np.max(np.abs(c)) > self.lam * (1 + 1e-12)
                           or np.max(np.abs(g)) > self.lam * (1 + 1e-12)):
            raise EllipticityError("|c| and |g| must stay below Lambda")
        return c, g


# ---------------------------------------------------------------------------
# Kernel solvers


def _check_profile(profile: TimeMatrixProfile, field_: GridField):
    if profile.dim != field_.d:
        raise PreconditionError(f"profile has d={profile.dim}, field has d={field_.d}")


def _sampler(f0, field_: GridField | None, order: int = 3):
    """Callable (x, v) -> values from a callable or a cubic spline of a grid field."""
    if callable(f0) and not isinstance(f0, GridField):
        return f0
    g = f0 if isinstance(f0, GridField) else field_
    d = g.d
    pad = 8
    width = [(pad, pad) if g.periodic_x else (pad, pad)] * d + [(pad, pad)] * d
    vals = g.final().values
    if g.periodic_x:
        vals = np.pad(vals, width[:d] + [(0, 0)] * d, mode="wrap")
        vals = np.pad(vals, [(0, 0)] * d + width[d:], mode="constant")
    else:
        vals = np.pad(vals, width, mode="constant")
    coeffs = ndimage.spline_filter(vals, order=order, mode="constant")
    n_x = np.array(g.space_shape[:d])

    def sample(x, v):
        x = np.asarray(x, float)
        v = np.asarray(v, float)
        ix = (x - g.x_origin) / g.x_step
        if g.periodic_x:
            ix = np.mod(ix, n_x)
        iv = (v - g.v_origin) / g.v_step
        coords = np.concatenate([ix, iv], axis=-1) + pad
        flat = coords.reshape(-1, 2 * d).T
        out = ndimage.map_coordinates(coeffs, flat, order=order, mode="constant", cval=0.0,
                                      prefilter=False)
        return out.reshape(x.shape[:-1])

    return sample


def _hermite_expectation(km, t, sample, x, v, n_nodes):
    """E[f0(x - t v + t V - X, v - V)] for (X, V) distributed with density Gamma(t)."""
    d = km.d
    # covariance of (X, V): V ~ N(0, 2 A0), X | V ~ N(M^T V, 2 P)
    wa, qa = km.A0_eig
    wp, qp = km.P_eig
    z, w = gauss_hermite_tensor(n_nodes, 2 * d)
    Vn = (z[:, d:] * np.sqrt(2.0 * wa)) @ qa.T
    Xn = (z[:, :d] * np.sqrt(2.0 * wp)) @ qp.T + Vn @ km.M
    out = np.zeros(x.shape[:-1])
    for k in range(w.size):
        xs = x - t * v + t * Vn[k] - Xn[k]
        vs = v - Vn[k]
        out += w[k] * sample(xs, vs)
    return out


def _direct(km, t, f0: GridField, x, v):
    xs, vs = f0.mesh()
    weights = np.ones(f0.space_shape)
    if not f0.periodic_x:
        for k in range(f0.d):
            weights = _halve(weights, k)
    if f0.boundary != "periodic":
        for k in range(f0.d):
            weights = _halve(weights, f0.d + k)
    w = (weights * f0.values).reshape(-1) * f0.cell_volume()
    period = np.array([f0.x_period(k) if f0.periodic_x else 0.0 for k in range(f0.d)])
    d = f0.d
    images = None
    if f0.periodic_x:
        # include neighbouring cells whenever the kernel is wider than a period
        reach = 12.0 * math.sqrt(2.0 * km.P_eig[0].max())
        counts = [int(math.ceil(reach / period[k])) for k in range(d)]
        grids = np.meshgrid(*[np.arange(-c, c + 1) for c in counts], indexing="ij")
        images = np.stack([gg.ravel() for gg in grids], axis=-1) * period
    return _kernels.gauss_convolve(x.reshape(-1, d), v.reshape(-1, d), xs.reshape(-1, d),
                                   vs.reshape(-1, d), w, t, km.A0_inv, km.P_inv, km.M,
                                   log_normalization(km), period, images).reshape(x.shape[:-1])


def _halve(w, axis):
    w = np.moveaxis(w, axis, 0).copy()
    w[0] *= 0.5
    w[-1] *= 0.5
    return np.moveaxis(w, 0, axis)


def solve_ivp_kernel(profile: TimeMatrixProfile, f0, t: float, grid: GridField | None = None,
                     method: str = "direct", n_nodes: int = 48, leak_tol: float | None = None) -> GridField:
    """f(t) = int Gamma(t, x - x~ - t v~, v - v~) f0(x~, v~) dx~ dv~ on a grid.

    ``f0`` is a GridField (also the output grid unless ``grid`` is given) or
    a callable (x, v) together with ``grid``. ``method`` is "direct" (sum
    over the source grid) or "hermite" (Gauss-Hermite expectation over the
    kernel, with spline interpolation of gridded data).

    With ``leak_tol`` set, the output mass is compared with the input mass
    and a QuadratureError raised when they differ by more than ``leak_tol``
    (relative).
    """
    if not t > 0:
        raise PreconditionError("the kernel solver needs t > 0")
    out_grid = grid if grid is not None else f0
    if not isinstance(out_grid, GridField):
        raise PreconditionError("pass an output grid when f0 is a callable")
    _check_profile(profile, out_grid)
    km = assemble_matrices(profile, t)
    x, v = out_grid.mesh()
    if method == "direct":
        if not isinstance(f0, GridField):
            raise PreconditionError("the direct method needs gridded data")
        vals = _direct(km, t, f0.final(), x, v)
    elif method == "hermite":
        vals = _hermite_expectation(km, t, _sampler(f0, out_grid), x, v, n_nodes)
    else:
        raise PreconditionError(f"unknown kernel method {method!r}")
    out = out_grid.with_values(vals)
    if leak_tol is not None and isinstance(f0, GridField):
        m0 = f0.final().integral()
        m1 = out.integral()
        if abs(m1 - m0) > leak_tol * max(abs(m0), 1e-300):
            raise QuadratureError(f"mass leaked through the boundary: {m0:.12g} -> {m1:.12g}")
    return out


def solve_forced_kernel(profile: TimeMatrixProfile, g, t_end: float, grid: GridField,
                        n_steps: int = 32, n_nodes: int = 32) -> GridField:
    """Duhamel integral int_0^t_end [kernel from s to t_end] g(s) ds, f(0) = 0.

    The s-integral uses the midpoint rule; the kernel from s to t_end is the
    fundamental solution of the profile shifted by s. ``g`` is a callable
    (t, x, v) or a GridField with a time axis (linear in t, cubic in space).
    """
    if not t_end > 0:
        raise PreconditionError("t_end must be positive")
    _check_profile(profile, grid)
    x, v = grid.mesh()
    ds = t_end / n_steps
    total = np.zeros(x.shape[:-1])
    for k in range(n_steps):
        s = (k + 0.5) * ds
        gs = _forcing_slice(g, s, grid)
        km = assemble_matrices(profile.shifted(s), t_end - s)
        total += ds * _hermite_expectation(km, t_end - s, gs, x, v, n_nodes)
    return grid.with_values(total)


def _forcing_slice(g, s, grid):
    if isinstance(g, GridField):
        if not g.has_time:
            return _sampler(g, grid)
        ts = g.t_axis()
        pos = np.clip((s - ts[0]) / g.t_step, 0, ts.size - 1)
        lo = int(min(math.floor(pos), ts.size - 2)) if ts.size > 1 else 0
        frac = pos - lo if ts.size > 1 else 0.0
        vals = g.values[lo] * (1 - frac) + (g.values[lo + 1] * frac if ts.size > 1 else 0.0)
        return _sampler(g.with_values(vals), grid)
    return lambda x, v: np.broadcast_to(np.asarray(g(s, x, v), float), x.shape[:-1])


# ---------------------------------------------------------------------------
# Finite differences


@dataclass
class FDResult:
    final: GridField
    trajectory: GridField | None
    dt: float
    steps: int
    diagnostics: dict = field(default_factory=dict)


def stable_step(field_: GridField, lam: float, v_max: float) -> float:
    """Largest explicit step allowed by transport and diffusion."""
    d = field_.d
    lim_x = min(field_.x_step) / v_max if v_max > 0 else math.inf
    lim_v = min(field_.v_step) ** 2 / (2.0 * d * lam)
    return min(lim_x, lim_v)


def _transport(f, v, dt, field_: GridField, limiter):
    d = field_.d
    for k in range(d):
        moved = np.moveaxis(f, k, -1)
        shape = moved.shape
        courant = np.moveaxis(np.broadcast_to(v[..., k], f.shape), k, -1).reshape(-1, shape[-1])[:, 0]
        # velocity does not vary along x_k, so one Courant number per row
        rows = moved.reshape(-1, shape[-1])
        stepped = _kernels.advect_rows(rows, courant * dt / field_.x_step[k], limiter)
        f = np.moveaxis(stepped.reshape(shape), -1, k)
    return f


def _diffusion_rate(f, a, field_: GridField):
    d = field_.d
    mode = _kernels.PERIODIC if field_.boundary == "periodic" else _kernels.ZERO_GHOST
    nx = int(np.prod(field_.space_shape[:d]))
    vshape = field_.space_shape[d:]
    if d == 1:
        out = _kernels.diffusion_1v(f.reshape(nx, -1), a[..., 0, 0].reshape(nx, -1), field_.v_step[0], mode)
    elif d == 2:
        u = f.reshape((nx,) + vshape)
        out = _kernels.diffusion_2v(u, a[..., 0, 0].reshape(u.shape), a[..., 0, 1].reshape(u.shape),
                                    a[..., 1, 1].reshape(u.shape), field_.v_step[0], field_.v_step[1], mode)
    else:
        raise PreconditionError("the FD solver supports d <= 2")
    return out.reshape(f.shape)


def _grad_v(f, field_: GridField):
    d = field_.d
    out = []
    for k in range(d):
        ax = d + k
        p = np.pad(f, [(1, 1) if i == ax else (0, 0) for i in range(f.ndim)],
                   mode="wrap" if field_.boundary == "periodic" else "constant")
        hi = np.take(p, np.arange(2, p.shape[ax]), axis=ax)
        lo = np.take(p, np.arange(0, p.shape[ax] - 2), axis=ax)
        out.append((hi - lo) / (2.0 * field_.v_step[k]))
    return np.stack(out, axis=-1)


def solve_fd(coeffs: CoefficientField, f0: GridField, t_end: float, cfl_safety: float = 0.9,
             dt: float | None = None, scheme: str = "van-leer", store_every: int | None = None,
             t_start: float = 0.0) -> FDResult:
    """Explicit Lie-split solve from t_start to t_start + t_end.

    Per step: transport (flux-limited, periodic in x), diffusion (explicit
    Euler, second-order centred stencils with the 4-point cross for mixed
    derivatives), then the reaction f' = c f + g integrated exactly with c,
    g frozen over the step.
    """
    if not 0 < cfl_safety < 1:
        raise PreconditionError("cfl_safety must lie in (0, 1)")
    if not f0.periodic_x:
        raise PreconditionError("the FD solver needs periodic x axes")
    if f0.d > 2:
        raise PreconditionError("the FD solver supports d <= 2")
    if not t_end > 0:
        raise PreconditionError("t_end must be positive")
    limiter = {"van-leer": _kernels.VAN_LEER, "upwind": _kernels.UPWIND}.get(scheme)
    if limiter is None:
        raise PreconditionError(f"unknown transport scheme {scheme!r}")
    g0 = f0.final()
    x, v = g0.mesh()
    v_max = float(np.max(np.abs(v)))
    bound = stable_step(g0, coeffs.lam, v_max)
    if dt is None:
        n = max(1, int(math.ceil(t_end / (cfl_safety * bound))))
        dt = t_end / n
    else:
        if dt > bound * (1 + 1e-12):
            raise CFLError(f"dt={dt:.4g} exceeds the stability bound {bound:.4g}")
        n = max(1, int(round(t_end / dt)))
        dt = t_end / n
    f = np.array(g0.values, dtype=float)
    shape = f.shape
    frames = [f.copy()] if store_every else None
    t = t_start
    for step in range(n):
        f = _transport(f, v, dt, g0, limiter)
        a = coeffs.diffusion(t, t + dt, x, v, g0.d)
        f = f + dt * _diffusion_rate(f, a, g0)
        c, g = coeffs.reaction(t + 0.5 * dt, x, v, shape)
        if coeffs.b is not None:
            b = np.broadcast_to(np.asarray(coeffs.b(t + 0.5 * dt, x, v), float), shape + (g0.d,))
            g = g + np.sum(b * _grad_v(f, g0), axis=-1)
        growth = np.exp(c * dt)
        with np.errstate(divide="ignore", invalid="ignore"):
            phi = np.where(np.abs(c * dt) > 1e-12, np.expm1(c * dt) / np.where(c != 0, c, 1.0), dt)
        f = growth * f + phi * g
        t += dt
        if not np.all(np.isfinite(f)):
            bad = int(np.count_nonzero(~np.isfinite(f)))
            raise NumericalFailure(f"non-finite values after step {step + 1}",
                                   {"step": step + 1, "t": t, "dt": dt, "non_finite": bad,
                                    "max_abs_finite": float(np.max(np.abs(f[np.isfinite(f)]), initial=0.0))})
        if store_every and ((step + 1) % store_every == 0 or step + 1 == n):
            frames.append(f.copy())
    final = g0.with_values(f)
    traj = None
    if store_every:
        traj = g0.with_values(np.stack(frames), t_origin=t_start, t_step=dt * store_every)
        if n % store_every:
            # last stored frame is off the uniform time grid; drop it from the stack
            traj = g0.with_values(np.stack(frames[:-1]), t_origin=t_start, t_step=dt * store_every)
    return FDResult(final, traj, dt, n, {"stability_bound": bound, "v_max": v_max})


# ---------------------------------------------------------------------------
# Residuals


@dataclass
class ResidualReport:
    times: np.ndarray
    max_norm: np.ndarray
    l2_norm: np.ndarray
    threshold: float | None = None

    @property
    def flagged(self) -> bool:
        return self.threshold is not None and bool(np.any(self.max_norm > self.threshold))

    def summary(self) -> dict:
        return {"max_residual": float(self.max_norm.max()), "max_l2": float(self.l2_norm.max()),
                "flagged": self.flagged}


def residual_check(traj: GridField, coeffs: CoefficientField, threshold: float | None = None) -> ResidualReport:
    """Discrete (d_t + v.grad_x) f - Tr(a D_v^2 f) - c f - g on interior slices.

    Central differences in t, x (periodic) and v; the outermost v layer is
    excluded.
    """
    if not traj.has_time or traj.values.shape[0] < 3:
        raise PreconditionError("residual_check needs a trajectory with at least 3 time slices")
    d = traj.d
    ts = traj.t_axis()
    x, v = traj.mesh()
    F = traj.values
    spatial = traj.final()
    maxes, l2s = [], []
    interior = tuple([slice(None)] * d + [slice(1, -1)] * d)
    for k in range(1, F.shape[0] - 1):
        f = F[k]
        dt_f = (F[k + 1] - F[k - 1]) / (2.0 * traj.t_step)
        transport = np.zeros_like(f)
        for j in range(d):
            if traj.periodic_x:
                dx = (np.roll(f, -1, axis=j) - np.roll(f, 1, axis=j)) / (2.0 * traj.x_step[j])
            else:
                dx = np.gradient(f, traj.x_step[j], axis=j)
            transport += v[..., j] * dx
        a = coeffs.diffusion(ts[k], ts[k], x, v, d)
        diff = _diffusion_rate(f, a, spatial)
        c, g = coeffs.reaction(ts[k], x, v, f.shape)
        res = (dt_f + transport - diff - c * f - g)[interior]
        maxes.append(float(np.max(np.abs(res))))
        l2s.append(float(np.sqrt(np.mean(res * res))))
    return ResidualReport(ts[1:-1], np.array(maxes), np.array(l2s), threshold)


def sup_discrepancy(a: GridField, b: GridField) -> float:
    """max |a - b| / max |b| on a common grid."""
    if a.values.shape != b.values.shape:
        raise PreconditionError("fields live on different grids")
    scale = float(np.max(np.abs(b.values)))
    return float(np.max(np.abs(a.values - b.values))) / (scale if scale > 0 else 1.0)
