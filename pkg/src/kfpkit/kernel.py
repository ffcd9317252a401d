"""Fundamental solution of (d_t + v.grad_x) f = Tr(a(t) D_v^2 f).

    Gamma(t, x, v) = exp(-v.A0^{-1}v / 4 - q.P^{-1}q / 4) / ((4 pi)^d sqrt(det A0 det P)),
    q = x - M^T v = x - (t - A1 A0^{-1}) v,

for t > 0 and 0 otherwise. With a = I this is Kolmogorov's kernel
(sqrt(3) / (2 pi t^2))^d exp(-3|x - vt/2|^2 / t^3 - |v|^2 / (4t)).

Points are arrays with a trailing axis of length d.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import qmc

from .errors import PreconditionError, QuadratureError
from .matrices import KineticMatrices, TimeMatrixProfile, assemble_matrices, loglog_slope
from .quadrature import trapezoid_nodes

MAX_DEPTH = 5


def _points(x, v):
    x = np.asarray(x, float)
    v = np.asarray(v, float)
    if x.ndim == 0:
        x = x.reshape(1)
    if v.ndim == 0:
        v = v.reshape(1)
    x, v = np.broadcast_arrays(x, v)
    return x, v


def eval_kolmogorov(t, x, v) -> np.ndarray:
    """Closed-form kernel for a = I."""
    x, v = _points(x, v)
    d = x.shape[-1]
    t = float(t)
    if t <= 0:
        return np.zeros(x.shape[:-1])
    q = x - 0.5 * t * v
    expo = -3.0 * np.sum(q * q, axis=-1) / t**3 - np.sum(v * v, axis=-1) / (4.0 * t)
    return (math.sqrt(3.0) / (2.0 * math.pi * t * t)) ** d * np.exp(expo)


@dataclass
class KernelEvaluation:
    value: np.ndarray
    exponent_v: np.ndarray
    exponent_x: np.ndarray
    log_normalization: float


def _quadratic_forms(km: KineticMatrices, x, v):
    wa, qa = km.A0_eig
    wp, qp = km.P_eig
    q = x - v @ km.M  # x - M^T v
    va = v @ qa
    qq = q @ qp
    ev = 0.25 * np.sum(va * va / wa, axis=-1)
    ex = 0.25 * np.sum(qq * qq / wp, axis=-1)
    return ev, ex


def log_normalization(km: KineticMatrices) -> float:
    return -km.d * math.log(4.0 * math.pi) - 0.5 * (km.logdet_A0 + km.logdet_P)


def eval_kernel(profile: TimeMatrixProfile, t, x, v, matrices: KineticMatrices | None = None,
                tol: float = 1e-10) -> KernelEvaluation:
    x, v = _points(x, v)
    if x.shape[-1] != profile.dim:
        raise PreconditionError(f"points have d={x.shape[-1]}, profile has d={profile.dim}")
    t = float(t)
    shape = x.shape[:-1]
    if t <= 0:
        zero = np.zeros(shape)
        return KernelEvaluation(zero, zero.copy(), zero.copy(), -math.inf)
    km = matrices if matrices is not None else assemble_matrices(profile, t, tol)
    ev, ex = _quadratic_forms(km, x, v)
    ln = log_normalization(km)
    return KernelEvaluation(np.exp(ln - ev - ex), ev, ex, ln)


def kernel_value(profile, t, x, v, matrices=None) -> np.ndarray:
    return eval_kernel(profile, t, x, v, matrices).value


# ---------------------------------------------------------------------------
# Derivatives. Every x/v derivative of a Gaussian is (polynomial) * Gamma; the
# polynomial for an index list is the sum over partial matchings of the list
# into singletons (gradient entries) and pairs (Hessian entries).


def _phi_gradient_hessian(km: KineticMatrices, x, v):
    Pi = km.P_inv
    Ai = km.A0_inv
    M = km.M
    q = x - v @ M
    gx = -0.5 * q @ Pi  # P symmetric
    gv = -0.5 * v @ Ai + 0.5 * q @ Pi @ M.T
    d = km.d
    H = np.empty((2 * d, 2 * d))
    H[:d, :d] = -0.5 * Pi
    H[:d, d:] = 0.5 * Pi @ M.T
    H[d:, :d] = H[:d, d:].T
    H[d:, d:] = -0.5 * Ai - 0.5 * M @ Pi @ M.T
    return np.concatenate([gx, gv], axis=-1), H


class _GaussFactor:
    def __init__(self, g, H):
        self.g = g
        self.H = H
        self.memo = {(): np.ones(g.shape[:-1])}

    def __call__(self, idx: tuple) -> np.ndarray:
        idx = tuple(sorted(idx))
        hit = self.memo.get(idx)
        if hit is not None:
            return hit
        k, rest = idx[0], idx[1:]
        out = self.g[..., k] * self(rest)
        for m in range(len(rest)):
            out = out + self.H[k, rest[m]] * self(rest[:m] + rest[m + 1:])
        self.memo[idx] = out
        return out


class _Terms:
    """Linear combination of v^p * d^{(beta, alpha)} Gamma, keyed by (p, multi-index)."""

    def __init__(self, d: int, terms=None):
        self.d = d
        self.terms = terms if terms is not None else {((0,) * d, (0,) * (2 * d)): 1.0}

    def _add(self, out, key, c):
        if c != 0.0:
            out[key] = out.get(key, 0.0) + c

    def dx(self, k: int) -> "_Terms":
        out = {}
        for (p, m), c in self.terms.items():
            m2 = list(m)
            m2[k] += 1
            self._add(out, (p, tuple(m2)), c)
        return _Terms(self.d, out)

    def dv(self, k: int) -> "_Terms":
        out = {}
        d = self.d
        for (p, m), c in self.terms.items():
            m2 = list(m)
            m2[d + k] += 1
            self._add(out, (p, tuple(m2)), c)
            if p[k]:
                p2 = list(p)
                p2[k] -= 1
                self._add(out, (tuple(p2), m), c * p[k])
        return _Terms(self.d, out)

    def times_v(self, k: int) -> "_Terms":
        out = {}
        for (p, m), c in self.terms.items():
            p2 = list(p)
            p2[k] += 1
            self._add(out, (tuple(p2), m), c)
        return _Terms(self.d, out)

    def scale(self, s: float) -> "_Terms":
        return _Terms(self.d, {k: c * s for k, c in self.terms.items()})

    def __add__(self, other: "_Terms") -> "_Terms":
        out = dict(self.terms)
        for k, c in other.terms.items():
            self._add(out, k, c)
        return _Terms(self.d, out)

    def generator(self, a: np.ndarray) -> "_Terms":
        """Apply -v.grad_x + Tr(a D_v^2), the t-derivative of the kernel (a.e.)."""
        acc = _Terms(self.d, {})
        for k in range(self.d):
            acc = acc + self.dx(k).times_v(k).scale(-1.0)
        return acc + self.second_v(a)

    def second_v(self, a: np.ndarray) -> "_Terms":
        acc = _Terms(self.d, {})
        for i in range(self.d):
            di = self.dv(i)
            for j in range(self.d):
                if a[i, j] != 0.0:
                    acc = acc + di.dv(j).scale(float(a[i, j]))
        return acc

    def max_order(self) -> int:
        return max((sum(m) for (_, m) in self.terms), default=0)


def _check_multi(idx, d, name):
    idx = tuple(int(i) for i in (idx if idx is not None else (0,) * d))
    if len(idx) != d or any(i < 0 for i in idx):
        raise PreconditionError(f"{name} must be a nonnegative multi-index of length {d}")
    return idx


def derivative_terms(profile: TimeMatrixProfile, t: float, j: int, alpha, beta) -> _Terms:
    d = profile.dim
    alpha = _check_multi(alpha, d, "alpha")
    beta = _check_multi(beta, d, "beta")
    depth = sum(alpha) + 3 * sum(beta) + 2 * j
    if j < 0 or depth > MAX_DEPTH:
        raise PreconditionError(f"derivative depth |alpha|+3|beta|+2j = {depth} exceeds {MAX_DEPTH}")
    if j >= 1 and profile.near_breakpoint(t, 1e-12 * max(1.0, abs(t))):
        raise PreconditionError(f"t={t} is a breakpoint of a(t); time derivatives are undefined there")
    terms = _Terms(d)
    a = profile.value(t)
    if j >= 1:
        terms = terms.generator(a)
    if j >= 2:
        # d_t (L_t Gamma) = L_t^2 Gamma + Tr(a'(t) D_v^2 Gamma)
        terms = terms.generator(a) + _Terms(d).second_v(profile.derivative(t))
    for k, n in enumerate(beta):
        for _ in range(n):
            terms = terms.dx(k)
    for k, n in enumerate(alpha):
        for _ in range(n):
            terms = terms.dv(k)
    return terms


def _evaluate_terms(terms: _Terms, km: KineticMatrices, x, v) -> np.ndarray:
    ev, ex = _quadratic_forms(km, x, v)
    gamma = np.exp(log_normalization(km) - ev - ex)
    g, H = _phi_gradient_hessian(km, x, v)
    factor = _GaussFactor(g, H)
    total = np.zeros(x.shape[:-1])
    for (p, m), c in sorted(terms.terms.items()):
        idx = tuple(k for k, n in enumerate(m) for _ in range(n))
        poly = factor(idx)
        if any(p):
            poly = poly * np.prod(v ** np.asarray(p), axis=-1)
        total = total + c * poly
    return total * gamma


def eval_kernel_derivative(profile: TimeMatrixProfile, t, x, v, j: int = 0, alpha=None, beta=None,
                           matrices: KineticMatrices | None = None) -> np.ndarray:
    """d_t^j d_x^beta d_v^alpha Gamma at (t, x, v), analytically.

    Time derivatives use the equation itself, d_t Gamma = -v.grad_x Gamma
    + Tr(a(t) D_v^2 Gamma), valid for a.e. t.
    """
    x, v = _points(x, v)
    t = float(t)
    if not t > 0:
        raise PreconditionError("derivatives are evaluated for t > 0")
    terms = derivative_terms(profile, t, j, alpha, beta)
    km = matrices if matrices is not None else assemble_matrices(profile, t)
    return _evaluate_terms(terms, km, x, v)


# ---------------------------------------------------------------------------
# Moments


@dataclass(frozen=True)
class MomentSpec:
    j: int = 0
    alpha: tuple = ()
    beta: tuple = ()
    r: float = 0.0
    s: float = 0.0
    shift_max: bool = False

    def normalized(self, d: int) -> "MomentSpec":
        a = tuple(self.alpha) if self.alpha else (0,) * d
        b = tuple(self.beta) if self.beta else (0,) * d
        if len(a) != d or len(b) != d:
            raise PreconditionError("multi-index length does not match dimension")
        if self.r < 0 or self.s < 0:
            raise PreconditionError("weights r, s must be nonnegative")
        if sum(a) + 3 * sum(b) + 2 * self.j > MAX_DEPTH:
            raise PreconditionError("unsupported derivative depth")
        return MomentSpec(self.j, a, b, float(self.r), float(self.s), self.shift_max)

    @property
    def predicted_exponent(self) -> float:
        return -(2 * self.j + sum(self.alpha) + 3 * sum(self.beta)) / 2 + (3 * self.r + self.s) / 2

    def label(self) -> str:
        a = "".join(map(str, self.alpha)) or "0"
        b = "".join(map(str, self.beta)) or "0"
        tag = "|shift" if self.shift_max else ""
        return f"j{self.j}|a{a}|b{b}|r{self.r:g}|s{self.s:g}{tag}"

    @classmethod
    def from_dict(cls, doc: dict) -> "MomentSpec":
        return cls(int(doc.get("j", 0)), tuple(doc.get("alpha", ())), tuple(doc.get("beta", ())),
                   float(doc.get("r", 0.0)), float(doc.get("s", 0.0)), bool(doc.get("shift_max", False)))


@dataclass(frozen=True)
class QuadratureBudget:
    n0: int = 65  # nodes per axis on the first level (odd keeps levels nested)
    n_max: int = 1025
    rtol: float = 1e-5
    width: float = 12.0  # truncation in standard deviations
    n_shifts: int = 64


@dataclass
class MomentResult:
    value: float
    error_estimate: float
    nodes_per_axis: int
    tail_bound: float


def _shift_samples(t: float, d: int, n: int) -> np.ndarray:
    """Deterministic low-discrepancy shifts (xi_x, xi_v) in B_{(t/2)^3} x B_{t/2}."""
    sob = qmc.Sobol(2 * d, scramble=False)
    u = sob.random_base2(int(math.ceil(math.log2(max(n, 2)))))[:n]
    c = 2.0 * u - 1.0  # cube [-1, 1]^{2d}

    def to_ball(p):
        nrm2 = np.linalg.norm(p, axis=1, keepdims=True)
        nrminf = np.max(np.abs(p), axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(nrm2 > 0, p * nrminf / nrm2, 0.0)
        return out * (1.0 - 1e-9)  # open balls

    rx, rv = (t / 2) ** 3, t / 2
    xs = to_ball(c[:, :d]) * rx
    vs = to_ball(c[:, d:]) * rv
    return np.concatenate([xs, vs], axis=1)


def _tensor_slices(halfwidths, n, max_points: int = 1 << 21):
    """Tensor trapezoid rule yielded in slabs along the first axis to bound memory."""
    axes = [trapezoid_nodes(-h, h, n) for h in halfwidths]
    rest_nodes = np.meshgrid(*[a[0] for a in axes[1:]], indexing="ij")
    rest_weights = np.meshgrid(*[a[1] for a in axes[1:]], indexing="ij")
    rest = np.stack([g.ravel() for g in rest_nodes], axis=-1)
    w_rest = np.prod(np.stack([g.ravel() for g in rest_weights], axis=-1), axis=-1)
    per = max(1, max_points // rest.shape[0])
    first, w_first = axes[0]
    for start in range(0, n, per):
        block = first[start:start + per]
        pts = np.concatenate([np.repeat(block, rest.shape[0])[:, None], np.tile(rest, (block.size, 1))], axis=1)
        w = np.repeat(w_first[start:start + per], rest.shape[0]) * np.tile(w_rest, block.size)
        yield pts, w


def _tensor_grid(halfwidths, n):
    parts = list(_tensor_slices(halfwidths, n))
    return np.concatenate([p for p, _ in parts]), np.concatenate([w for _, w in parts])


def _moment_at_level(profile, km, terms, spec: MomentSpec, n: int, budget: QuadratureBudget,
                     shifts) -> float:
    d = profile.dim
    wa, qa = km.A0_eig
    wp, qp = km.P_eig
    sig_v = np.sqrt(2.0 * wa)
    sig_y = np.sqrt(2.0 * wp)
    margin_v = margin_y = 0.0
    if shifts is not None:
        margin_v = np.max(np.linalg.norm(shifts[:, d:], axis=1))
        margin_y = np.max(np.linalg.norm(shifts[:, :d], axis=1)) + np.linalg.norm(km.M, 2) * margin_v
    half = np.concatenate([budget.width * sig_y + margin_y, budget.width * sig_v + margin_v])
    total = 0.0
    for pts, w in _tensor_slices(half, n):
        y = pts[:, :d] @ qp.T
        v = pts[:, d:] @ qa.T
        x = y + v @ km.M
        weight = np.ones(len(w))
        if spec.r:
            weight = weight * np.linalg.norm(x, axis=1) ** spec.r
        if spec.s:
            weight = weight * np.linalg.norm(v, axis=1) ** spec.s
        if shifts is None:
            vals = np.abs(_evaluate_terms(terms, km, x, v))
        else:
            vals = np.zeros(len(w))
            for sh in shifts:
                np.maximum(vals, np.abs(_evaluate_terms(terms, km, x + sh[:d], v + sh[d:])), out=vals)
        total += float(np.sum(w * weight * vals))
    return total


def moment_integral(profile: TimeMatrixProfile, t: float, spec: MomentSpec,
                    budget: QuadratureBudget = QuadratureBudget()) -> MomentResult:
    """int int |d_t^j d_x^beta d_v^alpha Gamma| |x|^r |v|^s dx dv (optionally max over shifts).

    Tensor trapezoid in the kernel's own coordinates (v, x - Mv), each rotated
    to principal axes and truncated at ``budget.width`` standard deviations.
    Levels are nested (n -> 2n - 1) and Richardson-extrapolated until
    successive values agree to rtol.
    """
    if not t > 0:
        raise PreconditionError("moments are defined for t > 0")
    spec = spec.normalized(profile.dim)
    km = assemble_matrices(profile, t)
    terms = derivative_terms(profile, t, spec.j, spec.alpha, spec.beta)
    shifts = None
    if spec.shift_max:
        shifts = np.vstack([np.zeros((1, 2 * profile.dim)),
                            _shift_samples(t, profile.dim, budget.n_shifts - 1)])
    n = budget.n0
    coarse = _moment_at_level(profile, km, terms, spec, n, budget, shifts)
    tail = 2 * profile.dim * math.erfc(budget.width / math.sqrt(2.0))
    prev_rich = None
    while True:
        n2 = 2 * n - 1
        if n2 > budget.n_max:
            raise QuadratureError(
                f"moment {spec.label()} at t={t:g} did not converge within {budget.n_max} nodes/axis")
        fine = _moment_at_level(profile, km, terms, spec, n2, budget, shifts)
        # weights |x|^r, |v|^s and the absolute value have kinks, so the
        # trapezoid error is O(h^2); extrapolate it away
        rich = (4.0 * fine - coarse) / 3.0
        if fine == 0.0 and coarse == 0.0:
            return MomentResult(0.0, 0.0, n2, tail)
        err = abs(rich - fine)
        if prev_rich is not None:
            err = min(err, abs(rich - prev_rich))
        if abs(fine - coarse) <= budget.rtol * abs(fine) or (
                prev_rich is not None and abs(rich - prev_rich) <= budget.rtol * abs(rich)):
            return MomentResult(rich, err + tail * abs(rich), n2, tail)
        prev_rich, coarse, n = rich, fine, n2


@dataclass
class ScalingReport:
    specs: list
    times: np.ndarray
    values: np.ndarray  # (n_specs, n_times)
    errors: np.ndarray
    slopes: np.ndarray
    predicted: np.ndarray
    threshold: float = 0.1

    @property
    def deviations(self) -> np.ndarray:
        return self.slopes - self.predicted

    @property
    def flags(self) -> np.ndarray:
        return np.abs(self.deviations) > self.threshold

    @property
    def ok(self) -> bool:
        return not bool(np.any(self.flags))

    def rows(self):
        for i, spec in enumerate(self.specs):
            for k, t in enumerate(self.times):
                yield {"spec_id": spec.label(), "t": float(t), "value": float(self.values[i, k]),
                       "error_estimate": float(self.errors[i, k]), "slope": float(self.slopes[i]),
                       "predicted": float(self.predicted[i]), "deviation": float(self.deviations[i])}


def moment_scaling_scan(profile: TimeMatrixProfile, specs: Sequence[MomentSpec], times,
                        budget: QuadratureBudget = QuadratureBudget(), executor=None,
                        threshold: float = 0.1) -> ScalingReport:
    times = np.asarray(times, float)
    if times.size < 2 or times.max() / times.min() < 100 * (1 - 1e-9):
        raise PreconditionError("the time grid must span at least two decades")
    specs = [s.normalized(profile.dim) for s in specs]
    jobs = [(i, k) for i in range(len(specs)) for k in range(times.size)]
    run = lambda job: moment_integral(profile, float(times[job[1]]), specs[job[0]], budget)
    results = list(executor.map(run, jobs)) if executor is not None else [run(j) for j in jobs]
    values = np.empty((len(specs), times.size))
    errors = np.empty_like(values)
    for (i, k), res in zip(jobs, results):
        values[i, k] = res.value
        errors[i, k] = res.error_estimate
    slopes = np.array([loglog_slope(times, values[i]) for i in range(len(specs))])
    predicted = np.array([s.predicted_exponent for s in specs])
    return ScalingReport(specs, times, values, errors, slopes, predicted, threshold)


# ---------------------------------------------------------------------------


@dataclass
class CKReport:
    s: float
    t: float
    lhs: np.ndarray  # Gamma(s + t, z)
    rhs: np.ndarray  # convolution
    rel_error: np.ndarray  # nan where skipped
    skipped: np.ndarray

    @property
    def max_rel_error(self) -> float:
        e = self.rel_error[~self.skipped]
        return float(e.max()) if e.size else 0.0


def is_autonomous(profile: TimeMatrixProfile) -> bool:
    if profile.kind == "constant":
        return True
    if profile.is_piecewise:
        m = profile.matrices
        return bool(np.all(np.abs(m - m[0]) == 0))
    return False


def chapman_kolmogorov_check(profile: TimeMatrixProfile, s: float, t: float, x, v,
                             n: int = 128, width: float = 12.0, floor: float = 1e-30) -> CKReport:
    """Gamma(s+t, z) against int Gamma(t, z~^{-1} o z) Gamma(s, z~) dz~ at points (x, v)."""
    if not is_autonomous(profile):
        raise PreconditionError("the semigroup identity needs a time-independent a")
    if not (s > 0 and t > 0):
        raise PreconditionError("s and t must be positive")
    x, v = _points(x, v)
    d = profile.dim
    ks = assemble_matrices(profile, s)
    kt = assemble_matrices(profile, t)
    wa, qa = ks.A0_eig
    wp, qp = ks.P_eig
    half = np.concatenate([width * np.sqrt(2 * wp), width * np.sqrt(2 * wa)])
    pts, w = _tensor_grid(half, n)
    vt = pts[:, d:] @ qa.T
    xt = pts[:, :d] @ qp.T + vt @ ks.M
    g_s = eval_kernel(profile, s, xt, vt, ks).value * w
    lhs = eval_kernel(profile, s + t, x, v).value
    flat_x = x.reshape(-1, d)
    flat_v = v.reshape(-1, d)
    rhs = np.empty(flat_x.shape[0])
    for i in range(flat_x.shape[0]):
        xi = flat_x[i] - xt - t * vt
        vi = flat_v[i] - vt
        rhs[i] = np.sum(eval_kernel(profile, t, xi, vi, kt).value * g_s)
    rhs = rhs.reshape(lhs.shape)
    skipped = (np.abs(lhs) < floor) & (np.abs(rhs) < floor)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(skipped, np.nan, np.abs(rhs - lhs) / np.abs(lhs))
    return CKReport(s, t, lhs, rhs, rel, skipped)
