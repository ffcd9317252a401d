"""Seminorm estimators on grids and empirical checks built on them.

Every seminorm is a supremum over same-time pairs of grid points with
|x - x'| < 1/2 and |v - v'| < 1/2 (strict). The estimators only look at
finitely many pairs, so they return lower bounds. Pairs are visited in a
fixed order (axis-aligned pairs by increasing offset, then seeded random
pairs) and ``pair_cap`` truncates that order, which makes the estimate
nondecreasing in ``pair_cap``.

Matrix and vector valued fields use the Euclidean (Frobenius) norm of the
difference.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import PreconditionError, QuadratureError
from .geometry import KineticCylinder, KineticPoint, japanese
from .grid import GridField, write_csv
from .matrices import TimeMatrixProfile
from .rng import make_rng

KINDS = ("holder_aniso", "log_holder", "weighted_sup", "holder_x")
CAP = 0.5
_BLOCK = 1 << 18


@dataclass(frozen=True)
class SeminormSpec:
    """Which seminorm to estimate.

    ``holder_aniso``: |f(z) - f(z')| / (|x - x'|^alpha_x + |v - v'|^alpha_v),
    with alpha_x = alpha/3 and alpha_v = alpha unless given.
    ``log_holder``: denominator |x - x'|^(alpha/3) + log(1/|v - v'|)^(-theta).
    ``holder_x``: pairs with equal v only, denominator |x - x'|^alpha_x.
    ``weighted_sup``: sup of <v>^weight_n |f| (no pairs).
    """

    kind: str = "holder_aniso"
    alpha: float = 0.5
    theta: float = 1.0
    weight_n: float = 0.0
    pair_cap: int = 4_000_000
    alpha_x: float | None = None
    alpha_v: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PreconditionError(f"unknown seminorm kind {self.kind!r}")
        if self.kind != "weighted_sup" and not 0 < self.alpha <= 1:
            raise PreconditionError("alpha must lie in (0, 1]")
        if self.kind == "log_holder" and not self.theta > 0:
            raise PreconditionError("theta must be positive")
        if self.weight_n < 0:
            raise PreconditionError("weight_n must be nonnegative")
        if self.pair_cap < 1:
            raise PreconditionError("pair_cap must be positive")

    @property
    def exponent_x(self) -> float:
        return self.alpha_x if self.alpha_x is not None else self.alpha / 3.0

    @property
    def exponent_v(self) -> float:
        return self.alpha_v if self.alpha_v is not None else self.alpha

    @classmethod
    def from_dict(cls, doc: dict) -> "SeminormSpec":
        keys = {"kind", "alpha", "theta", "weight_n", "pair_cap", "alpha_x", "alpha_v", "seed"}
        return cls(**{k: v for k, v in doc.items() if k in keys})


@dataclass(frozen=True)
class WeightedNorm:
    """||f||_{L^{inf,n}} = sup <v>^n |f|."""

    n: float = 0.0

    def __call__(self, f: GridField, region: KineticCylinder | None = None, values=None) -> float:
        vals = _component_values(f, values)
        mask = region_mask(f, region)
        if not mask.any():
            raise PreconditionError("region does not meet the grid")
        _, v = _full_mesh(f)
        w = japanese(v) ** self.n
        mag = np.sqrt(np.sum(vals * vals, axis=-1))
        return float(np.max((w * mag)[mask]))


@dataclass
class SeminormEstimate:
    value: float
    spec: SeminormSpec
    pairs: int
    argmax: dict | None = None

    def to_dict(self) -> dict:
        return {"value": self.value, "kind": self.spec.kind, "pairs": self.pairs, "argmax": self.argmax}


# ---------------------------------------------------------------------------
# Grid helpers


def _full_mesh(f: GridField):
    """x, v meshes broadcast to the full value shape (time axis included)."""
    x, v = f.mesh()
    if f.has_time:
        nt = f.values.shape[0]
        x = np.broadcast_to(x, (nt,) + x.shape)
        v = np.broadcast_to(v, (nt,) + v.shape)
    return x, v


def _component_values(f: GridField, values=None) -> np.ndarray:
    """Field samples with a trailing component axis."""
    vals = f.values if values is None else np.asarray(values, float)
    if vals.shape == f.values.shape:
        return vals[..., None]
    if vals.shape[:-1] != f.values.shape:
        raise PreconditionError("values must match the grid shape, optionally plus one component axis")
    return vals


def region_mask(f: GridField, region: KineticCylinder | None) -> np.ndarray:
    """Grid points inside the region. A spatial slice is taken to sit at the region's time."""
    if region is None:
        return np.ones(f.values.shape, bool)
    x, v = _full_mesh(f)
    z0 = region.centered(f.d)
    if f.has_time:
        t = np.broadcast_to(f.t_axis().reshape((-1,) + (1,) * (2 * f.d)), f.values.shape)
    else:
        t = np.full(f.values.shape, z0.t)
    return region.contains_arrays(t, x, v)


def _spatial_axes(f: GridField):
    """(array axis, step, is_x, component) for every x and v axis."""
    off = 1 if f.has_time else 0
    out = [(off + k, float(f.x_step[k]), True, k) for k in range(f.d)]
    out += [(off + f.d + k, float(f.v_step[k]), False, k) for k in range(f.d)]
    return out


def _denominator(spec: SeminormSpec, dx, dv):
    """dx, dv: Euclidean separations (arrays)."""
    with np.errstate(divide="ignore"):
        if spec.kind == "holder_aniso":
            return dx ** spec.exponent_x + dv ** spec.exponent_v
        if spec.kind == "log_holder":
            logterm = np.where(dv > 0, np.log(1.0 / np.where(dv > 0, dv, 0.5)) ** (-spec.theta), 0.0)
            return dx ** (spec.alpha / 3.0) + logterm
        if spec.kind == "holder_x":
            return np.where(dv > 0, 0.0, dx ** spec.exponent_x)
    raise PreconditionError(f"{spec.kind} is not a pair seminorm")


def _within_caps(dx, dv):
    lim = CAP * (1.0 - 1e-12)
    return (dx < lim) & (dv < lim)


# ---------------------------------------------------------------------------
# The estimator


class _Scan:
    """Running maximum over pair blocks with a hard cap on visited pairs."""

    def __init__(self, vals, cap):
        self.vals = vals
        self.cap = cap
        self.seen = 0
        self.best = -1.0
        self.arg = None

    @property
    def full(self) -> bool:
        return self.seen >= self.cap

    def feed(self, first, second, denom):
        room = self.cap - self.seen
        if room <= 0 or first.size == 0:
            return
        first, second, denom = first[:room], second[:room], denom[:room]
        self.seen += first.size
        best, arg = _kernels.pair_max(self.vals, first, second, denom)
        if arg >= 0 and best > self.best:
            self.best = best
            self.arg = (int(first[arg]), int(second[arg]))


def _axis_pairs(scan: _Scan, spec, mask, shape, axes):
    idx = np.arange(int(np.prod(shape))).reshape(shape)
    limits = [int(math.floor((CAP * (1 - 1e-12)) / step)) for _, step, _, _ in axes]
    for k in range(1, max(limits, default=0) + 1):
        for (ax, step, is_x, _), kmax in zip(axes, limits):
            if k > kmax or k >= shape[ax]:
                continue
            if spec.kind == "holder_x" and not is_x:
                continue
            lo = [slice(None)] * len(shape)
            hi = [slice(None)] * len(shape)
            lo[ax] = slice(0, shape[ax] - k)
            hi[ax] = slice(k, shape[ax])
            both = mask[tuple(lo)] & mask[tuple(hi)]
            first = idx[tuple(lo)][both]
            second = idx[tuple(hi)][both]
            sep = np.array([k * step])
            dx, dv = (sep, np.zeros(1)) if is_x else (np.zeros(1), sep)
            denom = float(_denominator(spec, dx, dv)[0])
            scan.feed(first, second, np.full(first.size, denom))
            if scan.full:
                return


def _random_pairs(scan: _Scan, spec, mask, shape, axes, n_pairs):
    points = np.flatnonzero(mask)
    if points.size == 0 or n_pairs <= 0:
        return
    rng = make_rng(spec.seed, 0x5E41)
    limits = np.array([int(math.floor((CAP * (1 - 1e-12)) / step)) for _, step, _, _ in axes])
    steps = np.array([step for _, step, _, _ in axes])
    is_x = np.array([flag for _, _, flag, _ in axes])
    ax_ids = [ax for ax, _, _, _ in axes]
    if spec.kind == "holder_x":
        limits = np.where(is_x, limits, 0)
    remaining = n_pairs
    while remaining > 0 and not scan.full:
        m = min(_BLOCK, remaining)
        remaining -= m
        base = points[rng.integers(0, points.size, m)]
        offs = rng.integers(-limits, limits + 1, size=(m, len(axes)))
        multi = np.array(np.unravel_index(base, shape)).T
        target = multi.copy()
        target[:, ax_ids] += offs
        inside = np.all((target >= 0) & (target < np.array(shape)), axis=1) & np.any(offs != 0, axis=1)
        base, target, offs = base[inside], target[inside], offs[inside]
        second = np.ravel_multi_index(target.T, shape) if base.size else base
        keep = mask.reshape(-1)[second] if base.size else np.zeros(0, bool)
        base, second, offs = base[keep], second[keep], offs[keep]
        phys = offs * steps
        dx = np.sqrt(np.sum(phys[:, is_x] ** 2, axis=1))
        dv = np.sqrt(np.sum(phys[:, ~is_x] ** 2, axis=1))
        ok = _within_caps(dx, dv)
        denom = _denominator(spec, dx[ok], dv[ok])
        scan.feed(base[ok], second[ok], denom)


def _point_dict(f: GridField, flat: int) -> dict:
    multi = np.unravel_index(flat, f.values.shape)
    off = 1 if f.has_time else 0
    t = float(f.t_origin + f.t_step * multi[0]) if f.has_time else None
    x = [float(f.x_origin[k] + f.x_step[k] * multi[off + k]) for k in range(f.d)]
    v = [float(f.v_origin[k] + f.v_step[k] * multi[off + f.d + k]) for k in range(f.d)]
    return {"t": t, "x": x, "v": v}


def estimate_seminorm(f: GridField, spec: SeminormSpec, region: KineticCylinder | None = None,
                      values=None, random_pairs: int | None = None, mask=None) -> SeminormEstimate:
    """Lower-bound estimate of the seminorm of ``f`` over ``region``.

    ``values`` optionally replaces ``f.values`` and may carry one trailing
    component axis (vector or flattened matrix fields). With a time axis only
    pairs on the same slice are compared. An explicit boolean ``mask`` is
    intersected with the region.
    """
    vals = _component_values(f, values)
    mask = region_mask(f, region) if mask is None else region_mask(f, region) & np.asarray(mask, bool)
    if not mask.any():
        raise PreconditionError("region does not meet the grid")
    if spec.kind == "weighted_sup":
        value = WeightedNorm(spec.weight_n)(f, region, vals)
        return SeminormEstimate(value, spec, 0)
    shape = f.values.shape
    axes = _spatial_axes(f)
    flat_vals = vals.reshape(-1, vals.shape[-1])
    scan = _Scan(flat_vals, spec.pair_cap)
    _axis_pairs(scan, spec, mask, shape, axes)
    if random_pairs is None:
        random_pairs = min(int(mask.sum()) * 8, 1_000_000)
    _random_pairs(scan, spec, mask, shape, axes, random_pairs)
    if scan.arg is None:
        raise PreconditionError("no admissible pair inside the separation caps")
    first, second = scan.arg
    arg = {"first": _point_dict(f, first), "second": _point_dict(f, second)}
    return SeminormEstimate(max(scan.best, 0.0), spec, scan.seen, arg)


def sup_norm(f: GridField, region: KineticCylinder | None = None, values=None) -> float:
    return WeightedNorm(0.0)(f, region, values)


# ---------------------------------------------------------------------------
# Derivatives on grids


def velocity_derivatives(f: GridField):
    """Second-order finite differences: (D_v f, D_v^2 f) with trailing (d,) and (d*d,) axes."""
    d = f.d
    off = 1 if f.has_time else 0
    vals = f.values
    grads = [np.gradient(vals, f.v_step[k], axis=off + d + k, edge_order=2) for k in range(d)]
    hess = []
    for i in range(d):
        for j in range(d):
            hess.append(np.gradient(grads[i], f.v_step[j], axis=off + d + j, edge_order=2))
    if d == 1:
        # the nested first difference has a wide stencil; use the compact one in 1d
        ax = off + 1
        u = np.moveaxis(vals, ax, -1)
        h2 = np.empty_like(u)
        h = f.v_step[0]
        h2[..., 1:-1] = (u[..., 2:] - 2 * u[..., 1:-1] + u[..., :-2]) / (h * h)
        h2[..., 0] = (2 * u[..., 0] - 5 * u[..., 1] + 4 * u[..., 2] - u[..., 3]) / (h * h)
        h2[..., -1] = (2 * u[..., -1] - 5 * u[..., -2] + 4 * u[..., -3] - u[..., -4]) / (h * h)
        hess = [np.moveaxis(h2, -1, ax)]
    return np.stack(grads, axis=-1), np.stack(hess, axis=-1)


def transport_derivative(traj: GridField) -> GridField:
    """(d_t + v.grad_x) f on interior time slices, with the residual stencils of the solver."""
    if not traj.has_time or traj.values.shape[0] < 3:
        raise PreconditionError("need a trajectory with at least 3 slices")
    F = traj.values
    out = (F[2:] - F[:-2]) / (2.0 * traj.t_step)
    _, v = traj.mesh()
    for j in range(traj.d):
        ax = 1 + j
        dx = (np.roll(F[1:-1], -1, axis=ax) - np.roll(F[1:-1], 1, axis=ax)) / (2.0 * traj.x_step[j])
        out = out + v[..., j] * dx
    return traj.with_values(out, t_origin=traj.t_origin + traj.t_step, t_step=traj.t_step)


# ---------------------------------------------------------------------------
# Interpolation inequalities


@dataclass
class InequalityRow:
    inequality: str
    eps: float
    lhs: float
    rhs: float

    @property
    def constant(self) -> float:
        if self.lhs == 0.0:
            return 0.0
        return self.lhs / self.rhs if self.rhs > 0 else math.inf


@dataclass
class InterpolationReport:
    rows: list
    seminorms: dict = field(default_factory=dict)

    def constants(self) -> dict:
        out: dict = {}
        for r in self.rows:
            out[r.inequality] = max(out.get(r.inequality, 0.0), r.constant)
        return out

    @property
    def max_constant(self) -> float:
        return max(self.constants().values(), default=0.0)

    @property
    def finite(self) -> bool:
        return math.isfinite(self.max_constant)

    def csv(self) -> str:
        return write_csv(["inequality", "eps", "lhs", "rhs", "constant"],
                         [(r.inequality, r.eps, r.lhs, r.rhs, r.constant) for r in self.rows])


def refinement_ratio(coarse: InterpolationReport, fine: InterpolationReport) -> float:
    """Largest factor between the constants of two resolutions (1 when both vanish)."""
    worst = 1.0
    cc, cf = coarse.constants(), fine.constants()
    for name in cc:
        a, b = cc[name], cf.get(name, 0.0)
        if a == 0.0 and b == 0.0:
            continue
        if min(a, b) == 0.0:
            return math.inf
        worst = max(worst, a / b, b / a)
    return worst


def _origin_region(f: GridField, r: float) -> KineticCylinder:
    t0 = float(f.t_axis()[-1]) if f.has_time else 0.0
    return KineticCylinder(r, KineticPoint(t0, np.zeros(f.d), np.zeros(f.d)))


def check_interpolation(u: GridField, alpha: float, eps_list: Sequence[float], r: float = 0.5,
                        derivatives=None, pair_cap: int = 2_000_000, seed: int = 0) -> InterpolationReport:
    """Evaluate the four interpolation inequalities on Q_r with constant one.

    For each eps the report stores LHS and RHS; LHS/RHS is the smallest
    constant that makes the inequality hold. ``derivatives`` may pass exact
    (D_v u, D_v^2 u) arrays with trailing component axes.
    """
    if r < 0.5:
        raise PreconditionError("the interpolation inequalities are stated on Q_r with r >= 1/2")
    if not 0 < alpha < 1:
        raise PreconditionError("alpha must lie in (0, 1)")
    region = _origin_region(u, r)
    du, d2u = derivatives if derivatives is not None else velocity_derivatives(u)
    aniso = SeminormSpec("holder_aniso", alpha, pair_cap=pair_cap, seed=seed)
    xhold = SeminormSpec("holder_x", alpha, alpha_x=(2 + alpha) / 3, pair_cap=pair_cap, seed=seed)
    try:
        s = {
            "u_aniso": estimate_seminorm(u, aniso, region).value,
            "Du_aniso": estimate_seminorm(u, aniso, region, du).value,
            "D2u_aniso": estimate_seminorm(u, aniso, region, d2u).value,
            "u_holder_x": _maybe(lambda: estimate_seminorm(u, xhold, region).value),
            "u_sup": sup_norm(u, region),
            "Du_sup": sup_norm(u, region, du),
            "D2u_sup": sup_norm(u, region, d2u),
        }
    except FloatingPointError as exc:
        raise QuadratureError(f"derivative estimation failed: {exc}") from exc
    top = s["u_holder_x"] + s["D2u_aniso"]
    rows = []
    for eps in eps_list:
        if not eps > 0:
            raise PreconditionError("eps must be positive")
        rows += [
            InequalityRow("u_aniso", eps, s["u_aniso"], eps**2 * top + eps ** (-alpha) * s["u_sup"]),
            InequalityRow("Du_aniso", eps, s["Du_aniso"], eps * top + eps ** (-alpha - 1) * s["u_sup"]),
            InequalityRow("Du_sup", eps, s["Du_sup"],
                          eps ** (alpha + 1) * s["D2u_aniso"] + s["u_sup"] / eps),
            InequalityRow("D2u_sup", eps, s["D2u_sup"], eps**alpha * s["D2u_aniso"] + s["u_sup"] / eps**2),
        ]
    return InterpolationReport(rows, s)


def _maybe(fn) -> float:
    """Seminorms with no admissible pair (a single x point, say) count as zero."""
    try:
        return fn()
    except PreconditionError:
        return 0.0


def check_log_interpolation(u: GridField, alpha: float, theta: float, eps_list: Sequence[float],
                            r: float = 0.5, derivatives=None, pair_cap: int = 2_000_000,
                            seed: int = 0) -> InterpolationReport:
    """||D_v^2 u|| <= C (|log eps|^theta / eps^2 [u]_log + eps^alpha [D_v^2 u]_aniso), eps in (0, r)."""
    if not 0 < alpha < 1 or not theta > 0:
        raise PreconditionError("need alpha in (0, 1) and theta > 0")
    region = _origin_region(u, r)
    _, d2u = derivatives if derivatives is not None else (None, velocity_derivatives(u)[1])
    logspec = SeminormSpec("log_holder", alpha, theta=theta, pair_cap=pair_cap, seed=seed)
    aniso = SeminormSpec("holder_aniso", alpha, pair_cap=pair_cap, seed=seed)
    s = {
        "u_log": estimate_seminorm(u, logspec, region).value,
        "D2u_aniso": estimate_seminorm(u, aniso, region, d2u).value,
        "D2u_sup": sup_norm(u, region, d2u),
    }
    rows = []
    for eps in eps_list:
        if not 0 < eps < r:
            raise PreconditionError("eps must lie in (0, r)")
        rhs = abs(math.log(eps)) ** theta / eps**2 * s["u_log"] + eps**alpha * s["D2u_aniso"]
        rows.append(InequalityRow("D2u_sup_log", eps, s["D2u_sup"], rhs))
    return InterpolationReport(rows, s)


def velocity_field(func, lo, hi, n: int) -> GridField:
    """A function of v alone sampled on [lo, hi]^d (one dummy x point per axis)."""
    lo = np.atleast_1d(np.asarray(lo, float))
    hi = np.atleast_1d(np.asarray(hi, float))
    d = lo.size
    return GridField.from_function(lambda x, v: func(v), (np.zeros(d), np.ones(d)), (lo, hi),
                                   1, n, boundary="periodic-x")


@dataclass
class WeightInterpolationReport:
    k: float
    theta: float
    mu: float
    lhs: float
    weighted_sup_k: float
    log_seminorm: float
    weighted_sup_low: float
    boundary_dominated: bool

    @property
    def rhs(self) -> float:
        return self.weighted_sup_k ** (1 - self.mu) * self.log_seminorm**self.mu + self.weighted_sup_low

    @property
    def constant(self) -> float:
        if self.lhs == 0.0:
            return 0.0
        return self.lhs / self.rhs if self.rhs > 0 else math.inf

    def to_dict(self) -> dict:
        return {"k": self.k, "theta": self.theta, "mu": self.mu, "lhs": self.lhs, "rhs": self.rhs,
                "constant": self.constant, "boundary_dominated": self.boundary_dominated}


def check_weight_interpolation(phi: GridField, k: float, theta: float, mu: float,
                               pair_cap: int = 4_000_000, seed: int = 0) -> WeightInterpolationReport:
    """[<v>^((1-mu)k) phi]_{log, theta mu} against ||phi||_{k}^(1-mu) [phi]_{log, theta}^mu + ||phi||_{((1-mu)k-1)+}."""
    if not 0 < mu < 1 or not theta > 0 or not k > 0:
        raise PreconditionError("need mu in (0, 1), theta > 0 and k > 0")
    if not np.all(np.isfinite(phi.values)):
        raise PreconditionError("phi must be finite")
    _, v = _full_mesh(phi)
    weighted = japanese(v) ** k * np.abs(phi.values)
    sup_k = float(weighted.max())
    # the weighted sup counts as divergent when it keeps growing up to the edge of the v box
    edge = np.zeros(phi.values.shape, bool)
    off = 1 if phi.has_time else 0
    for j in range(phi.d):
        sl = [slice(None)] * phi.values.ndim
        sl[off + phi.d + j] = [0, -1]
        edge[tuple(sl)] = True
    boundary_dominated = bool(sup_k > 0 and weighted[edge].max() >= sup_k * (1 - 1e-12)
                              and weighted[edge].max() > weighted[~edge].max(initial=0.0))
    if boundary_dominated:
        raise PreconditionError("the weighted sup of phi is attained on the edge of the v box")
    low = max((1 - mu) * k - 1, 0.0)
    lhs_vals = japanese(v) ** ((1 - mu) * k) * phi.values
    spec_lhs = SeminormSpec("log_holder", 1.0, theta=theta * mu, pair_cap=pair_cap, seed=seed)
    spec_rhs = SeminormSpec("log_holder", 1.0, theta=theta, pair_cap=pair_cap, seed=seed)
    lhs = estimate_seminorm(phi, spec_lhs, values=lhs_vals).value
    log_semi = estimate_seminorm(phi, spec_rhs).value
    sup_low = WeightedNorm(low)(phi)
    return WeightInterpolationReport(k, theta, mu, lhs, sup_k, log_semi, sup_low, boundary_dominated)


# ---------------------------------------------------------------------------
# Schauder experiment


@dataclass(frozen=True)
class ExperimentConfig:
    """Additive coefficient family a(t, x, v) = m_L(t) + psi(x, v) in d = 1.

    m_L is a seeded piecewise-constant profile with L segments on [-1, 0];
    psi = psi_amplitude cos(2 pi x / period) cos(v) fixes the (x, v)
    seminorms of a independently of L. The solution starts from 0 at t = -1
    and is driven by the smooth forcing g.
    """

    family: str = "additive"
    L_values: tuple = (1, 4, 16, 64)
    alpha: float = 0.5
    theta: float = 1.0
    grid: int = 48
    seed: int = 0
    n_seeds: int = 3
    x_half_width: float = 1.2
    v_half_width: float = 2.0
    psi_amplitude: float = 0.25
    profile_lambda: float = 1.5
    lam: float = 2.5
    tolerances: dict = field(default_factory=lambda: {"rho_variation": 2.0})
    pair_cap: int = 4_000_000

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        kw = {k: v for k, v in doc.items() if k in known}
        if "L_values" in kw:
            kw["L_values"] = tuple(int(x) for x in kw["L_values"])
        return cls(**kw)


@dataclass
class SchauderRow:
    seed: int
    L: int
    lhs: float
    rhs: float
    parts: dict

    @property
    def rho(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0 else 0.0


@dataclass
class SchauderReport:
    rows: list
    tolerance: float

    def variation(self) -> dict:
        out = {}
        for seed in sorted({r.seed for r in self.rows}):
            rhos = [r.rho for r in self.rows if r.seed == seed]
            lo, hi = min(rhos), max(rhos)
            out[seed] = hi / lo if lo > 0 else (1.0 if hi == 0 else math.inf)
        return out

    @property
    def max_variation(self) -> float:
        return max(self.variation().values(), default=1.0)

    @property
    def ok(self) -> bool:
        return self.max_variation <= self.tolerance

    def csv(self) -> str:
        return write_csv(["seed", "L", "LHS", "RHS", "rho"],
                         [(r.seed, r.L, r.lhs, r.rhs, r.rho) for r in self.rows])

    def to_dict(self) -> dict:
        return {"rows": [{"seed": r.seed, "L": r.L, "LHS": r.lhs, "RHS": r.rhs, "rho": r.rho, **r.parts}
                         for r in self.rows],
                "variation": {str(k): v for k, v in self.variation().items()},
                "max_variation": self.max_variation, "tolerance": self.tolerance, "ok": self.ok}


def schauder_bracket(traj: GridField, a_values, g_values, alpha: float, c_values=None,
                     pair_cap: int = 4_000_000, seed: int = 0) -> dict:
    """LHS and RHS of the Schauder estimate from a trajectory ending at t = 0.

    ``a_values`` (trailing d*d axis), ``g_values`` and ``c_values`` are
    sampled on the trajectory grid. LHS lives on Q_{1/2}, RHS on Q_1.
    """
    d = traj.d
    q_half = _origin_region(traj, 0.5)
    q_one = _origin_region(traj, 1.0)
    aniso = SeminormSpec("holder_aniso", alpha, pair_cap=pair_cap, seed=seed)
    xhold = SeminormSpec("holder_x", alpha, alpha_x=(2 + alpha) / 3, pair_cap=pair_cap, seed=seed)
    _, d2f = velocity_derivatives(traj)
    f_x = _maybe(lambda: estimate_seminorm(traj, xhold, q_half).value)
    d2_semi = estimate_seminorm(traj, aniso, q_half, d2f).value
    a_semi = estimate_seminorm(traj, aniso, q_one, np.asarray(a_values).reshape(traj.values.shape + (d * d,))).value
    g_semi = estimate_seminorm(traj, aniso, q_one, g_values).value
    c_semi = 0.0 if c_values is None else estimate_seminorm(traj, aniso, q_one, c_values).value
    f_sup = sup_norm(traj, q_one)
    lhs = f_x + d2_semi
    rhs = (1 + c_semi + a_semi ** (1 + 2 / alpha)) * f_sup + (1 + a_semi) * g_semi
    return {"lhs": lhs, "rhs": rhs, "f_holder_x": f_x, "D2f_aniso": d2_semi, "a_aniso": a_semi,
            "g_aniso": g_semi, "c_aniso": c_semi, "f_sup": f_sup}


def _schauder_run(cfg: ExperimentConfig, seed: int, L: int) -> SchauderRow:
    from .solver import CoefficientField, solve_fd

    period = 2 * cfg.x_half_width
    m = TimeMatrixProfile.seeded(seed, L, cfg.profile_lambda, dim=1, horizon=1.0)
    amp = cfg.psi_amplitude

    def psi(x, v):
        return amp * np.cos(2 * np.pi * x[..., 0] / period) * np.cos(v[..., 0])

    def a(t, x, v):
        base = float(m.value(min(max(t + 1.0, 0.0), 1.0))[0, 0])
        return (base + psi(x, v))[..., None, None]

    def g(t, x, v):
        return 0.5 * np.exp(-2.0 * v[..., 0] ** 2) * (1.0 + 0.5 * np.sin(2 * np.pi * x[..., 0] / period))

    n = cfg.grid
    f0 = GridField.from_function(lambda x, v: np.zeros(x.shape[:-1]), ([-cfg.x_half_width], [cfg.x_half_width]),
                                 ([-cfg.v_half_width], [cfg.v_half_width]), n, n)
    coeffs = CoefficientField(a, c=0.0, g=g, lam=cfg.lam)
    res = solve_fd(coeffs, f0, 1.0, store_every=1, t_start=-1.0)
    traj = res.trajectory
    ts = traj.t_axis()
    x, v = traj.mesh()
    # only slices that can reach Q_1 are kept; m_L cancels in same-time differences but is sampled honestly
    keep = ts > -1.0 - 1e-12
    traj = traj.with_values(traj.values[keep], t_origin=ts[keep][0], t_step=traj.t_step)
    ts = traj.t_axis()
    a_vals = np.stack([a(t, x, v)[..., 0, 0] for t in ts])[..., None]
    g_vals = np.broadcast_to(g(0.0, x, v), traj.values.shape)
    parts = schauder_bracket(traj, a_vals, g_vals, cfg.alpha, pair_cap=cfg.pair_cap, seed=seed)
    return SchauderRow(seed, L, parts["lhs"], parts["rhs"], parts)


def schauder_experiment(config: ExperimentConfig, executor=None) -> SchauderReport:
    """Sweep the time roughness L at fixed (x, v) seminorms and record rho(L) = LHS / RHS."""
    if config.family != "additive":
        raise PreconditionError(f"unknown coefficient family {config.family!r}")
    if not 0 < config.alpha < 1:
        raise PreconditionError("alpha must lie in (0, 1)")
    jobs = [(config.seed + s, L) for s in range(config.n_seeds) for L in config.L_values]
    mapper = executor.map if executor is not None else map
    rows = list(mapper(lambda job: _schauder_run(config, *job), jobs))
    return SchauderReport(rows, float(config.tolerances.get("rho_variation", 2.0)))


# ---------------------------------------------------------------------------
# Log-Hoelder scaling


@dataclass
class LogScalingReport:
    t0: float
    theta: float
    lhs: float
    seminorm: float
    log_factor: float

    @property
    def rhs(self) -> float:
        return self.seminorm * self.log_factor

    @property
    def constant(self) -> float:
        if self.lhs == 0.0:
            return 0.0
        return self.lhs / self.rhs if self.rhs > 0 else math.inf

    def to_dict(self) -> dict:
        return {"t0": self.t0, "theta": self.theta, "lhs": self.lhs, "rhs": self.rhs, "constant": self.constant}


def check_logholder_scaling(f, z0: KineticPoint, theta: float, gamma: float = -2.0, alpha: float = 0.5,
                            n: int = 64, pair_cap: int = 4_000_000, seed: int = 0) -> LogScalingReport:
    """Compare [f_z0]_{log, theta/2}(Q_1) with [f]_{log, theta} log(1/t0)^(-theta/2).

    ``f`` is a callable f(x, v) (time independent) or a spatial GridField.
    The right-hand seminorm is taken over the image of Q_1 under the frame
    map, sampled on an n-point grid per axis.
    """
    from .landau import make_scaling_frame, rescale_field

    t0 = z0.t
    if not 0 < t0 < 0.5:
        raise PreconditionError("the log-Hoelder scaling needs 0 < t0 < 1/2")
    frame = make_scaling_frame(z0, gamma)
    scaled = rescale_field(f, frame, n)
    lhs_spec = SeminormSpec("log_holder", alpha, theta=theta / 2, pair_cap=pair_cap, seed=seed)
    lhs = estimate_seminorm(scaled, lhs_spec, KineticCylinder(1.0)).value
    # the image of the t = 0 slice of Q_1: a box around (x0, v0) with the frame's reach
    reach_v = frame.r0 * frame.s_max
    reach_x = frame.r0**3 * frame.s_max
    if callable(f) and not isinstance(f, GridField):
        src = GridField.from_function(f, (z0.x - reach_x, z0.x + reach_x), (z0.v - reach_v, z0.v + reach_v),
                                      n, n, boundary="truncated-decay")
    else:
        src = f
    x, v = src.mesh()
    _, ix, iv = frame.inverse_map(np.full(x.shape[:-1], t0), x, v)
    image = (np.sqrt(np.sum(ix**2, axis=-1)) < 1.0) & (np.sqrt(np.sum(iv**2, axis=-1)) < 1.0)
    rhs_spec = SeminormSpec("log_holder", alpha, theta=theta, pair_cap=pair_cap, seed=seed)
    semi = estimate_seminorm(src, rhs_spec, mask=image).value
    return LogScalingReport(t0, theta, lhs, semi, math.log(1.0 / t0) ** (-theta / 2))
