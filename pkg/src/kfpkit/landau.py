"""Landau coefficients in velocity space and the kinetic change of variables.

    abar^h(v) = a_gamma int (I - w w^T/|w|^2) |w|^(2+gamma) h(v - w) dw
    cbar^h(v) = c_gamma int |w|^gamma h(v - w) dw        (gamma > -3)
              = c_gamma h(v)                             (gamma = -3)

Integrals are taken in spherical coordinates around the singular point
w = 0, with the polar axis pointing at the bulk of h. The Jacobian r^2 turns
the radial weights into r^(4+gamma) and r^(2+gamma).
"""
from __future__ import annotations

import functools
import inspect
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special
from scipy.interpolate import RegularGridInterpolator

from .errors import DimensionError, PreconditionError, QuadratureError
from .geometry import KineticCylinder, KineticPoint, compose_arrays, invert_into_arrays, japanese
from .grid import GridField, write_csv
from .matrices import loglog_slope
from .quadrature import gauss_legendre

PROFILE_KINDS = ("maxwellian", "indicator_ball", "grid")
TAIL = 1e-16


@dataclass(frozen=True)
class LandauParams:
    gamma: float = -2.0
    a_const: float = 1.0
    c_const: float = 1.0

    def __post_init__(self):
        if not -3.0 <= self.gamma < 0.0:
            raise PreconditionError("gamma must lie in [-3, 0)")
        if not (self.a_const > 0 and self.c_const > 0):
            raise PreconditionError("a_gamma and c_gamma must be positive")


@dataclass(frozen=True)
class Witness:
    """h >= delta on the ball B_radius(center)."""

    delta: float
    radius: float
    center: tuple


@dataclass(frozen=True, eq=False)
class VelocityProfile:
    """A nonnegative density h on R^3.

    ``maxwellian``: amplitude exp(-|v - center|^2 / temperature).
    ``indicator_ball``: amplitude on the open ball B_radius(center).
    ``grid``: trilinear interpolation of a v-only GridField, zero outside.
    """

    kind: str = "maxwellian"
    center: tuple = (0.0, 0.0, 0.0)
    radius: float = 1.0
    amplitude: float = 1.0
    temperature: float = 1.0
    field: GridField | None = None
    decay_k: float = math.inf
    witness: Witness | None = None

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise PreconditionError(f"unknown velocity profile {self.kind!r}")
        c = tuple(float(a) for a in np.atleast_1d(self.center))
        object.__setattr__(self, "center", c)
        if self.amplitude < 0:
            raise PreconditionError("h must be nonnegative")
        if self.kind == "grid":
            if self.field is None:
                raise PreconditionError("grid profiles need a field")
            if np.min(self.field.values) < 0:
                raise PreconditionError("h must be nonnegative")
        if self.kind in ("maxwellian", "indicator_ball") and not (self.radius > 0 and self.temperature > 0):
            raise PreconditionError("radius and temperature must be positive")

    @classmethod
    def maxwellian(cls, center=(0.0, 0.0, 0.0), temperature: float = 1.0, amplitude: float = 1.0,
                   witness: bool = True) -> "VelocityProfile":
        w = Witness(amplitude * math.exp(-1.0 / temperature), 1.0, tuple(center)) if witness else None
        return cls("maxwellian", tuple(center), amplitude=amplitude, temperature=temperature, witness=w)

    @classmethod
    def indicator(cls, center=(0.0, 0.0, 0.0), radius: float = 1.0, amplitude: float = 1.0) -> "VelocityProfile":
        return cls("indicator_ball", tuple(center), radius=radius, amplitude=amplitude,
                   witness=Witness(amplitude, radius, tuple(center)))

    @classmethod
    def from_dict(cls, doc: dict) -> "VelocityProfile":
        kind = doc.get("kind", "maxwellian")
        if kind == "maxwellian":
            return cls.maxwellian(doc.get("center", (0, 0, 0)), doc.get("temperature", 1.0),
                                  doc.get("amplitude", 1.0), doc.get("witness", True))
        if kind == "indicator_ball":
            return cls.indicator(doc.get("center", (0, 0, 0)), doc.get("radius", 1.0), doc.get("amplitude", 1.0))
        if kind == "grid":
            fld = GridField.load(doc["path"])
            return cls("grid", _grid_center(fld), field=fld, decay_k=doc.get("decay_k", math.inf))
        raise PreconditionError(f"unknown velocity profile {kind!r}")

    def shifted(self, u) -> "VelocityProfile":
        """h(. - u)."""
        if self.kind == "grid":
            raise PreconditionError("grid profiles are not shifted")
        c = tuple(np.asarray(self.center) + np.asarray(u, float))
        w = None
        if self.witness is not None:
            w = Witness(self.witness.delta, self.witness.radius, tuple(np.asarray(self.witness.center) + u))
        return VelocityProfile(self.kind, c, self.radius, self.amplitude, self.temperature, None,
                               self.decay_k, w)

    @property
    def scale(self) -> float:
        """Length over which h varies."""
        if self.kind == "maxwellian":
            return math.sqrt(self.temperature)
        if self.kind == "indicator_ball":
            return self.radius
        return 2.0 * float(np.max(self.field.v_step))

    @property
    def reach(self) -> float:
        """h vanishes (or drops below TAIL relative) outside B_reach(center)."""
        if self.kind == "maxwellian":
            return math.sqrt(self.temperature * math.log(1.0 / TAIL))
        if self.kind == "indicator_ball":
            return self.radius
        lo = self.field.v_origin
        hi = lo + self.field.v_step * (np.array(self.field.space_shape[3:]) - 1)
        return float(np.linalg.norm(hi - lo)) / 2.0

    @functools.cached_property
    def _interp(self):
        fld = self.field
        axes = [fld.v_axis(k) for k in range(3)]
        vals = fld.values.reshape(fld.space_shape[3:])
        return RegularGridInterpolator(axes, vals, bounds_error=False, fill_value=0.0)

    def __call__(self, v) -> np.ndarray:
        v = np.asarray(v, float)
        c = np.asarray(self.center)
        if self.kind == "maxwellian":
            return self.amplitude * np.exp(-np.sum((v - c) ** 2, axis=-1) / self.temperature)
        if self.kind == "indicator_ball":
            return np.where(np.sum((v - c) ** 2, axis=-1) < self.radius**2, self.amplitude, 0.0)
        return self._interp(v.reshape(-1, 3)).reshape(v.shape[:-1])


def _grid_center(fld: GridField) -> tuple:
    lo = fld.v_origin
    hi = lo + fld.v_step * (np.array(fld.space_shape[3:]) - 1)
    return tuple(0.5 * (lo + hi))


@dataclass(frozen=True)
class LandauBudget:
    n_theta: int = 16
    n_phi: int = 32
    radial_order: int = 8
    panels_per_scale: int = 2
    estimate_error: bool = True

    def refined(self) -> "LandauBudget":
        return LandauBudget(self.n_theta * 2, self.n_phi, self.radial_order * 2, self.panels_per_scale,
                            False)


# ---------------------------------------------------------------------------
# Quadrature rules


@functools.lru_cache(maxsize=None)
def _validated_angular_rule(n_theta: int, n_phi: int):
    """Product rule on the sphere; checks int w w^T dOmega = (4 pi / 3) I."""
    mu, wmu = gauss_legendre(n_theta)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    st = np.sqrt(1 - mu**2)
    dirs = np.stack([np.outer(st, np.cos(phi)), np.outer(st, np.sin(phi)),
                     np.outer(mu, np.ones(n_phi))], axis=-1).reshape(-1, 3)
    w = np.outer(wmu, np.full(n_phi, 2 * np.pi / n_phi)).reshape(-1)
    second = np.einsum("n,ni,nj->ij", w, dirs, dirs)
    if np.max(np.abs(second - (4 * np.pi / 3) * np.eye(3))) > 1e-12:
        raise QuadratureError("angular rule fails the second-moment check")
    return mu, wmu


def _theta_edges(dist: float, scale: float, reach: float, edge_angle: float | None):
    """Panel edges in theta, graded towards the axis when h sits far from w = 0."""
    if dist <= 2 * scale:
        edges = np.linspace(0.0, np.pi, 5)
    else:
        t = 0.5 * scale / dist
        edges = [0.0]
        while t < np.pi:
            edges.append(t)
            t *= 2.0
        edges.append(np.pi)
        edges = np.array(edges)
    if edge_angle is not None:
        near = edge_angle * (1 - 0.5 ** np.arange(1, 9))
        edges = np.concatenate([edges[edges < edge_angle], near, [edge_angle],
                                edge_angle + (np.pi - edge_angle) * 0.5 ** np.arange(8, 0, -1),
                                edges[edges > edge_angle]])
        edges = np.unique(np.clip(edges, 0.0, np.pi))
    return edges


def _directions(axis, edges, n_theta, n_phi, rule_phi=None):
    """Unit directions and solid-angle weights, polar axis along ``axis``.

    With n_phi = 1 each direction stands for its whole phi circle.
    """
    mu0, wmu0 = _validated_angular_rule(n_theta, rule_phi or n_phi)
    mus, wts = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        a, b = math.cos(hi), math.cos(lo)
        if b - a <= 0:
            continue
        mus.append(0.5 * (b - a) * mu0 + 0.5 * (b + a))
        wts.append(0.5 * (b - a) * wmu0)
    mu = np.concatenate(mus)
    wmu = np.concatenate(wts)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    st = np.sqrt(np.clip(1 - mu**2, 0.0, None))
    local = np.stack([np.outer(st, np.cos(phi)), np.outer(st, np.sin(phi)),
                      np.outer(mu, np.ones(n_phi))], axis=-1).reshape(-1, 3)
    e3 = axis / np.linalg.norm(axis)
    helper = np.eye(3)[int(np.argmin(np.abs(e3)))]
    e1 = np.cross(e3, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(e3, e1)
    dirs = local @ np.stack([e1, e2, e3])
    w = np.outer(wmu, np.full(n_phi, 2 * np.pi / n_phi)).reshape(-1)
    return dirs, w


@functools.lru_cache(maxsize=None)
def _jacobi(n: int, power: float):
    """Nodes/weights on [0, 1] for the weight r^power."""
    x, w = special.roots_jacobi(n, 0.0, power)
    return 0.5 * (x + 1.0), w * 0.5 ** (power + 1.0)


def _radial_integrals(h: VelocityProfile, v, dirs, powers, budget: LandauBudget):
    """For each direction and power m: int_0^inf r^m h(v - r w) dr."""
    c = np.asarray(h.center)
    wstar = v - c
    p = dirs @ wstar
    b2 = np.maximum(float(wstar @ wstar) - p * p, 0.0)
    reach = h.reach
    s = np.sqrt(np.maximum(reach * reach - b2, 0.0))
    hit = reach * reach > b2
    r1 = np.where(hit, np.maximum(p - s, 0.0), 0.0)
    r2 = np.where(hit, np.maximum(p + s, 0.0), 0.0)
    out = {}
    if h.kind == "indicator_ball":
        for m in powers:
            out[m] = h.amplitude * (r2 ** (m + 1) - r1 ** (m + 1)) / (m + 1)
        return out
    inside = float(np.linalg.norm(wstar)) < reach
    n_pan = max(1, int(math.ceil(2 * reach / h.scale * budget.panels_per_scale)))
    x0, w0 = gauss_legendre(budget.radial_order)
    for m in powers:
        total = np.zeros(dirs.shape[0])
        start = r1
        if inside:
            # first panel carries the r^m singularity exactly
            rho = np.minimum(r2, 0.5 * h.scale)
            xj, wj = _jacobi(budget.radial_order, m)
            nodes = rho[:, None] * xj[None, :]
            vals = h(v[None, None, :] - nodes[..., None] * dirs[:, None, :])
            total += rho ** (m + 1) * (vals @ wj)
            start = rho
        length = np.maximum(r2 - start, 0.0) / n_pan
        for k in range(n_pan):
            lo = start + k * length
            nodes = lo[:, None] + 0.5 * length[:, None] * (x0[None, :] + 1.0)
            vals = h(v[None, None, :] - nodes[..., None] * dirs[:, None, :]) * nodes**m
            total += 0.5 * length * (vals @ w0)
        out[m] = total
    return out


def _coefficients(h: VelocityProfile, v, gamma: float, budget: LandauBudget, want_a: bool, want_c: bool):
    v = np.asarray(v, float)
    if v.shape != (3,):
        raise DimensionError("Landau coefficients live in d = 3")
    c = np.asarray(h.center)
    wstar = v - c
    dist = float(np.linalg.norm(wstar))
    axis = wstar if dist > 0 else np.array([0.0, 0.0, 1.0])
    edge = None
    if h.kind == "indicator_ball" and dist > h.radius:
        edge = math.asin(h.radius / dist)
    edges = _theta_edges(dist, h.scale, h.reach, edge)
    # radial profiles of symmetric h depend on theta only, so phi is integrated in closed form
    symmetric = h.kind != "grid"
    dirs, w = _directions(axis, edges, budget.n_theta, 1 if symmetric else budget.n_phi, budget.n_phi)
    powers = []
    if want_a:
        powers.append(4.0 + gamma)
    if want_c:
        powers.append(2.0 + gamma)
    rad = _radial_integrals(h, v, dirs, powers, budget)
    abar = cbar = None
    if want_a:
        wr = w * rad[4.0 + gamma]
        if symmetric:
            e3 = axis / np.linalg.norm(axis)
            along = np.outer(e3, e3)
            cos2 = (dirs @ e3) ** 2
            # mean of w w^T over phi at fixed theta
            mean_ww = cos2[:, None, None] * along + 0.5 * (1 - cos2)[:, None, None] * (np.eye(3) - along)
            abar = np.sum(wr) * np.eye(3) - np.einsum("n,nij->ij", wr, mean_ww)
        else:
            abar = np.sum(wr) * np.eye(3) - np.einsum("n,ni,nj->ij", wr, dirs, dirs)
        abar = 0.5 * (abar + abar.T)
    if want_c:
        cbar = float(np.sum(w * rad[2.0 + gamma]))
    return abar, cbar


def _check_decay(params: LandauParams, h: VelocityProfile):
    if h.decay_k <= 5 + params.gamma:
        raise PreconditionError(f"h needs decay k > 5 + gamma, certified k = {h.decay_k}")


@dataclass
class CoefficientValue:
    value: object
    error: float


def landau_abar(params: LandauParams, h: VelocityProfile, v, budget: LandauBudget = LandauBudget()) -> CoefficientValue:
    """abar^h(v) and an error estimate from a refined rule."""
    _check_decay(params, h)
    a, _ = _coefficients(h, v, params.gamma, budget, True, False)
    err = 0.0
    if budget.estimate_error:
        fine, _ = _coefficients(h, v, params.gamma, budget.refined(), True, False)
        err = float(np.max(np.abs(fine - a))) * params.a_const
        a = fine
    return CoefficientValue(params.a_const * a, err)


def landau_cbar(params: LandauParams, h: VelocityProfile, v, budget: LandauBudget = LandauBudget()) -> CoefficientValue:
    """cbar^h(v); exactly c_gamma h(v) when gamma = -3."""
    if params.gamma == -3.0:
        return CoefficientValue(params.c_const * float(h(np.asarray(v, float))), 0.0)
    _check_decay(params, h)
    _, c = _coefficients(h, v, params.gamma, budget, False, True)
    err = 0.0
    if budget.estimate_error:
        _, fine = _coefficients(h, v, params.gamma, budget.refined(), False, True)
        err = abs(fine - c) * params.c_const
        c = fine
    return CoefficientValue(params.c_const * max(c, 0.0), err)


@dataclass
class LandauCoefficientField:
    """abar and cbar at velocity samples."""

    v: np.ndarray
    abar: np.ndarray
    cbar: np.ndarray
    abar_error: np.ndarray
    cbar_error: np.ndarray

    def eigen_table(self):
        """Rows (|v|, eig_parallel, eig_perp_min, eig_perp_max, cbar)."""
        rows = []
        for v, a, c in zip(self.v, self.abar, self.cbar):
            par, perp = split_eigenvalues(a, v)
            rows.append((float(np.linalg.norm(v)), par, float(perp.min()), float(perp.max()), float(c)))
        return rows

    def csv(self) -> str:
        return write_csv(["speed", "eig_parallel", "eig_perp_min", "eig_perp_max", "cbar"], self.eigen_table())

    def component_fields(self, template: GridField) -> dict:
        """Scalar GridFields (one per abar entry plus cbar) on a v-grid template."""
        shape = template.values.shape
        out = {"cbar": template.with_values(self.cbar.reshape(shape))}
        for i in range(3):
            for j in range(i, 3):
                out[f"abar_{i + 1}{j + 1}"] = template.with_values(self.abar[:, i, j].reshape(shape))
        return out


def landau_field(params: LandauParams, h: VelocityProfile, v_samples,
                 budget: LandauBudget = LandauBudget(), executor=None) -> LandauCoefficientField:
    vs = np.asarray(v_samples, float).reshape(-1, 3)
    mapper = executor.map if executor is not None else map
    pairs = list(mapper(lambda v: (landau_abar(params, h, v, budget), landau_cbar(params, h, v, budget)), vs))
    return LandauCoefficientField(
        vs, np.array([p[0].value for p in pairs]), np.array([p[1].value for p in pairs]),
        np.array([p[0].error for p in pairs]), np.array([p[1].error for p in pairs]))


def split_eigenvalues(a: np.ndarray, v) -> tuple[float, np.ndarray]:
    """e.a.e along v/|v| and the eigenvalues of a restricted to v's orthogonal complement."""
    v = np.asarray(v, float)
    n = np.linalg.norm(v)
    e = v / n if n > 0 else np.array([0.0, 0.0, 1.0])
    helper = np.eye(3)[int(np.argmin(np.abs(e)))]
    e1 = np.cross(e, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(e, e1)
    basis = np.stack([e1, e2])
    perp = np.linalg.eigvalsh(basis @ a @ basis.T)
    return float(e @ a @ e), perp


# ---------------------------------------------------------------------------
# Ellipticity scan


@dataclass
class LandauBoundReport:
    gamma: float
    field: LandauCoefficientField
    slopes: dict
    checks: dict
    upper_only: bool
    tolerance: float

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        return {"gamma": self.gamma, "slopes": self.slopes, "checks": self.checks,
                "upper_only": self.upper_only, "tolerance": self.tolerance, "ok": self.ok}


def verify_ellipticity_bounds(params: LandauParams, h: VelocityProfile, v_samples,
                              budget: LandauBudget = LandauBudget(), tolerance: float = 0.1,
                              executor=None) -> LandauBoundReport:
    """Fit log-eigenvalues against log <v>: parallel ~ gamma, perpendicular ~ 2 + gamma."""
    fld = landau_field(params, h, v_samples, budget, executor)
    table = np.array(fld.eigen_table())
    jb = japanese(fld.v)
    g = params.gamma
    eigs_all = np.linalg.eigvalsh(fld.abar)
    slopes = {"parallel": loglog_slope(jb, table[:, 1]),
              "perp_min": loglog_slope(jb, table[:, 2]),
              "perp_max": loglog_slope(jb, table[:, 3])}
    checks = {
        "psd": bool(eigs_all.min() >= -1e-10),
        "cbar_nonnegative": bool(np.all(fld.cbar >= 0)),
        "parallel_upper": slopes["parallel"] <= g + tolerance,
        "perp_upper": slopes["perp_max"] <= 2 + g + tolerance,
    }
    upper_only = h.witness is None
    if not upper_only:
        checks["parallel_lower"] = slopes["parallel"] >= g - tolerance
        checks["perp_lower"] = slopes["perp_min"] >= 2 + g - tolerance
    return LandauBoundReport(g, fld, slopes, checks, upper_only, tolerance)


# ---------------------------------------------------------------------------
# Scaling frame


@dataclass(frozen=True, eq=False)
class ScalingFrame:
    """z -> z0 o (S z)_{r0}, with S acting on x and v."""

    z0: KineticPoint
    gamma: float
    S: np.ndarray
    r0: float

    @property
    def d(self) -> int:
        return self.z0.d

    @property
    def s_max(self) -> float:
        return float(np.max(np.linalg.eigvalsh(self.S)))

    @property
    def S_inv(self) -> np.ndarray:
        return np.linalg.inv(self.S)

    def forward(self, t, x, v):
        """(r0^2 t + t0, r0^3 S x + x0 + r0^2 t v0, r0 S v + v0)."""
        r = self.r0
        t = np.asarray(t, float)
        sx = np.asarray(x, float) @ self.S.T
        sv = np.asarray(v, float) @ self.S.T
        z = self.z0
        return compose_arrays(np.full(t.shape, z.t), z.x, z.v, r * r * t, r**3 * sx, r * sv)

    def inverse_map(self, t, x, v):
        z = self.z0
        t = np.asarray(t, float)
        dt, dx, dv = invert_into_arrays(np.full(t.shape, z.t), z.x, z.v, t, np.asarray(x, float),
                                        np.asarray(v, float))
        r = self.r0
        si = self.S_inv
        return dt / r**2, (dx @ si.T) / r**3, (dv @ si.T) / r

    def to_dict(self) -> dict:
        return {"t0": self.z0.t, "x0": self.z0.x.tolist(), "v0": self.z0.v.tolist(), "gamma": self.gamma,
                "r0": self.r0, "S": self.S.tolist()}


def make_scaling_frame(z0: KineticPoint, gamma: float) -> ScalingFrame:
    if not z0.t > 0:
        raise PreconditionError("the frame needs t0 > 0")
    v0 = z0.v
    jb = float(japanese(v0))
    n = np.linalg.norm(v0)
    d = z0.d
    if n > 0:
        e = v0 / n
        par = np.outer(e, e)
    else:
        par = np.zeros((d, d))
    S = jb ** (1 + gamma / 2) * (np.eye(d) - par) + jb ** (gamma / 2) * par
    if n == 0:
        S = np.eye(d)
    r0 = jb ** (-max(1 + gamma / 2, 0.0)) * min(1.0, math.sqrt(z0.t / 2))
    return ScalingFrame(z0, gamma, S, r0)


def frame_grid(d: int, n: int, active=None, t: float = 0.0, radius: float = 1.0) -> GridField:
    """Zero field on the box of Q_radius at time t. Axes outside ``active`` hold a single point at 0.

    ``active`` lists array axes 0..2d-1 (x axes first); by default all are sampled.
    """
    active = set(range(2 * d)) if active is None else set(active)
    reach = [radius**3] * d + [radius] * d
    shape, origin, step = [], [], []
    for ax in range(2 * d):
        if ax in active:
            shape.append(n)
            origin.append(-reach[ax])
            step.append(2 * reach[ax] / (n - 1))
        else:
            shape.append(1)
            origin.append(0.0)
            step.append(1.0)
    return GridField(np.zeros(shape), d, origin[:d], step[:d], origin[d:], step[d:], boundary="truncated-decay")


def _as_callable(f):
    params = len(inspect.signature(f).parameters)
    if params == 3:
        return f
    if params == 2:
        return lambda t, x, v: f(x, v)
    raise PreconditionError("callables take (x, v) or (t, x, v)")


def _interpolator(f: GridField):
    """Multilinear interpolation of a GridField; periodic x axes are padded by one wrapped point."""
    vals = f.values
    off = 1 if f.has_time else 0
    axes = [f.t_axis()] if f.has_time else []
    for k in range(f.d):
        ax = f.x_axis(k)
        if f.periodic_x:
            vals = np.concatenate([vals, np.take(vals, [0], axis=off + k)], axis=off + k)
            ax = np.append(ax, ax[-1] + f.x_step[k])
        axes.append(ax)
    axes += [f.v_axis(k) for k in range(f.d)]
    keep = [i for i, a in enumerate(axes) if a.size > 1]
    squeezed = vals.reshape([vals.shape[i] for i in keep])
    interp = RegularGridInterpolator([axes[i] for i in keep], squeezed, bounds_error=False, fill_value=np.nan)
    singles = [(i, axes[i][0]) for i in range(len(axes)) if axes[i].size == 1]

    def evaluate(t, x, v):
        x = np.asarray(x, float)
        if f.periodic_x:
            x = f.x_origin + np.mod(x - f.x_origin, f.x_step * np.array(f.space_shape[:f.d]))
        cols = ([np.broadcast_to(t, x.shape[:-1])] if f.has_time else []) + [x[..., k] for k in range(f.d)]
        cols += [np.asarray(v)[..., k] for k in range(f.d)]
        for i, val in singles:
            if np.max(np.abs(cols[i] - val)) > 1e-9:
                raise PreconditionError("sampling leaves a degenerate grid axis")
        pts = np.stack([cols[i] for i in keep], axis=-1)
        out = interp(pts.reshape(-1, len(keep))).reshape(pts.shape[:-1])
        if np.any(np.isnan(out)):
            raise PreconditionError("rescaled sampling points fall outside the source grid")
        return out

    return evaluate


def rescale_field(f, frame: ScalingFrame, n: int = 33, n_t: int | None = None, active=None) -> GridField:
    """f_z0(z) = f(z0 o (S z)_{r0}) sampled on the box of Q_1.

    ``f`` is a GridField (multilinear interpolation) or a callable of (x, v)
    or (t, x, v). Without ``n_t`` the result is the t = 0 slice; otherwise
    n_t slices at t = -1 + k / n_t, k = 1..n_t.
    """
    d = frame.d
    grid = frame_grid(d, n, active)
    evaluate = _interpolator(f) if isinstance(f, GridField) else _as_callable(f)
    x, v = grid.mesh()
    times = [0.0] if n_t is None else [-1.0 + k / n_t for k in range(1, n_t + 1)]
    slices = []
    for t in times:
        tt, xx, vv = frame.forward(np.full(x.shape[:-1], t), x, v)
        slices.append(np.asarray(evaluate(tt, xx, vv), float))
    if n_t is None:
        return grid.with_values(slices[0])
    return grid.with_values(np.stack(slices), t_origin=times[0], t_step=1.0 / n_t)


# ---------------------------------------------------------------------------
# Transformed coefficients


@dataclass(frozen=True, eq=False)
class SeparableDensity:
    """h(t, x, v) = x_factor(t, x) * profile(v)."""

    profile: VelocityProfile
    x_factor: object = None

    def factor(self, t, x) -> np.ndarray:
        if self.x_factor is None:
            return np.ones(np.asarray(x).shape[:-1])
        return np.asarray(self.x_factor(t, x), float)


@dataclass
class TransformedCoefficients:
    frame: ScalingFrame
    grid: GridField
    Abar: np.ndarray
    Cbar: np.ndarray
    cond_max: float
    cbar_scaled_sup: float

    def to_dict(self) -> dict:
        return {"frame": self.frame.to_dict(), "cond_max": self.cond_max, "cbar_scaled_sup": self.cbar_scaled_sup,
                "cbar_sup": float(np.max(self.Cbar))}


def transformed_coefficients(params: LandauParams, h_field, frame: ScalingFrame, grid: GridField | None = None,
                             budget: LandauBudget = LandauBudget(), executor=None) -> TransformedCoefficients:
    """Abar = S^-1 abar^h S^-1 and Cbar = r0^2 cbar^h at the frame images of a Q_1 grid.

    ``h_field`` is a SeparableDensity, or a callable (t, x) -> VelocityProfile.
    """
    if frame.d != 3:
        raise DimensionError("Landau coefficients live in d = 3")
    if grid is None:
        grid = frame_grid(3, 5)
    x, v = grid.mesh()
    t = np.zeros(x.shape[:-1])
    tt, xx, vv = frame.forward(t, x, v)
    si = frame.S_inv
    flat_v = vv.reshape(-1, 3)
    if isinstance(h_field, SeparableDensity):
        uniq, inverse = np.unique(flat_v, axis=0, return_inverse=True)
        cf = landau_field(params, h_field.profile, uniq, budget, executor)
        fac = h_field.factor(tt, xx).reshape(-1)
        abar = cf.abar[inverse.reshape(-1)] * fac[:, None, None]
        cbar = cf.cbar[inverse.reshape(-1)] * fac
    else:
        flat_t, flat_x = tt.reshape(-1), xx.reshape(-1, 3)
        abar = np.empty((flat_v.shape[0], 3, 3))
        cbar = np.empty(flat_v.shape[0])
        for i in range(flat_v.shape[0]):
            prof = h_field(flat_t[i], flat_x[i])
            abar[i] = landau_abar(params, prof, flat_v[i], budget).value
            cbar[i] = landau_cbar(params, prof, flat_v[i], budget).value
    A = si @ abar @ si.T
    C = frame.r0**2 * cbar
    inside = KineticCylinder(1.0).contains_arrays(t, x, v).reshape(-1)
    if not inside.any():
        raise PreconditionError("the grid misses Q_1")
    eig = np.linalg.eigvalsh(A[inside])
    cond = float(np.max(eig[:, -1] / eig[:, 0]))
    jb = float(japanese(frame.z0.v))
    scaled = float(np.max(C[inside])) * jb**2 / min(1.0, frame.z0.t)
    shape = grid.values.shape
    return TransformedCoefficients(frame, grid, A.reshape(shape + (3, 3)), C.reshape(shape), cond, scaled)


@dataclass
class HolderScalingReport:
    t0: np.ndarray
    seminorm: np.ndarray
    slope: float
    predicted: float
    tolerance: float

    @property
    def ok(self) -> bool:
        return abs(self.slope - self.predicted) <= self.tolerance

    def to_dict(self) -> dict:
        return {"t0": self.t0.tolist(), "seminorm": self.seminorm.tolist(), "slope": self.slope,
                "predicted": self.predicted, "tolerance": self.tolerance, "ok": self.ok}


def rough_x_density(profile: VelocityProfile, alpha: float, amplitude: float = 0.5) -> SeparableDensity:
    """h = (1 + amplitude |x_1|^(alpha/3)) profile(v): exactly C^(alpha/3) in x at x_1 = 0."""
    return SeparableDensity(profile, lambda t, x: 1.0 + amplitude * np.abs(np.asarray(x)[..., 0]) ** (alpha / 3))


def check_abar_holder_scaling(params: LandauParams, h_field: SeparableDensity, t0_values, v0, alpha: float,
                              n: int = 41, tolerance: float = 0.15, budget: LandauBudget = LandauBudget(),
                              pair_cap: int = 4_000_000, executor=None) -> HolderScalingReport:
    """Fit the t0 exponent of [Abar]_{C_x^(alpha/3) C_v^alpha(Q_3/4)} (predicted alpha/2).

    The seminorm is sampled on the (x_1, v_1) plane of Q_3/4, so it is a
    lower bound of the full six-dimensional one.
    """
    from .regularity import SeminormSpec, estimate_seminorm

    spec = SeminormSpec("holder_aniso", alpha, pair_cap=pair_cap)
    values = []
    ts = np.asarray(t0_values, float)
    for t0 in ts:
        z0 = KineticPoint(t0, np.zeros(3), np.asarray(v0, float))
        frame = make_scaling_frame(z0, params.gamma)
        grid = frame_grid(3, n, active=(0, 3), radius=0.75)
        tc = transformed_coefficients(params, h_field, frame, grid, budget, executor)
        est = estimate_seminorm(grid, spec, KineticCylinder(0.75), tc.Abar.reshape(grid.values.shape + (9,)))
        values.append(est.value)
    values = np.array(values)
    return HolderScalingReport(ts, values, loglog_slope(ts, values), alpha / 2, tolerance)
