"""Time-dependent diffusion profiles a(t) and the matrices A0, A1, A2, P, M.

    A_i(t) = int_0^t s^i a(s) ds,   P = A2 - A1 A0^{-1} A1,   M = t I - A0^{-1} A1.

Piecewise-constant profiles are integrated exactly; callables go through
adaptive Gauss-Legendre on the rescaled interval [0, 1].
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import EllipticityError, KFPError, PreconditionError
from .quadrature import adaptive_gauss_legendre, gauss_legendre
from .rng import make_rng

KINDS = ("constant", "piecewise-constant", "smooth-sampled", "seeded-random-piecewise")
_ALIASES = {
    "constant": "constant",
    "piecewise": "piecewise-constant",
    "piecewise-constant": "piecewise-constant",
    "seeded": "seeded-random-piecewise",
    "seeded-random-piecewise": "seeded-random-piecewise",
    "smooth": "smooth-sampled",
    "smooth-sampled": "smooth-sampled",
}
SYM_TOL = 1e-12


def _as_matrix_stack(mats, d=None) -> np.ndarray:
    m = np.asarray(mats, dtype=float)
    if m.ndim == 0:
        m = m.reshape(1, 1, 1)
    elif m.ndim == 1:
        # list of scalars -> d = 1
        m = m.reshape(-1, 1, 1)
    elif m.ndim == 2:
        m = m[None]
    if m.ndim != 3 or m.shape[1] != m.shape[2]:
        raise ValueError(f"expected a stack of square matrices, got shape {m.shape}")
    if d is not None and m.shape[1] != d:
        raise ValueError(f"matrix dimension {m.shape[1]} != {d}")
    return m


def check_ellipticity(mats: np.ndarray, lam: float, what: str = "a") -> None:
    """Raise unless every matrix m satisfies (1/lam) I <= m <= lam I."""
    mats = np.asarray(mats, float)
    asym = np.max(np.abs(mats - np.swapaxes(mats, -1, -2))) if mats.size else 0.0
    scale = max(1.0, float(np.max(np.abs(mats)))) if mats.size else 1.0
    if asym > SYM_TOL * scale:
        raise EllipticityError(f"{what} is not symmetric (max asymmetry {asym:.3e})")
    eig = np.linalg.eigvalsh(0.5 * (mats + np.swapaxes(mats, -1, -2)))
    lo, hi = float(eig.min()), float(eig.max())
    slack = 1e-12 * lam
    if lo < 1.0 / lam - slack or hi > lam + slack:
        raise EllipticityError(
            f"{what} violates ellipticity with Lambda={lam}: eigenvalues in [{lo:.6g}, {hi:.6g}]")


@dataclass(frozen=True, eq=False)
class TimeMatrixProfile:
    """A measurable, uniformly elliptic a(t).

    For the piecewise kinds ``matrices[k]`` applies on
    ``[breakpoints[k-1], breakpoints[k])`` with the outer pieces extended to
    -inf and +inf. ``func`` is used only by the smooth-sampled kind.
    """

    kind: str
    lam: float
    dim: int
    breakpoints: np.ndarray = field(default_factory=lambda: np.zeros(0))
    matrices: np.ndarray | None = None
    func: Callable[[float], np.ndarray] | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        kind = _ALIASES.get(self.kind)
        if kind is None:
            raise ValueError(f"unknown profile kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if not self.lam >= 1.0:
            raise EllipticityError(f"Lambda must be >= 1, got {self.lam}")
        if kind == "smooth-sampled":
            if self.func is None:
                raise ValueError("smooth-sampled profile needs a callable")
            horizon = float(self.meta.get("horizon", 1.0))
            probe = np.stack([np.atleast_2d(self.func(s)) for s in np.linspace(0.0, horizon, 65)])
            check_ellipticity(probe, self.lam, "a(t) samples")
            return
        mats = _as_matrix_stack(self.matrices, self.dim)
        bps = np.asarray(self.breakpoints, dtype=float).reshape(-1)
        if kind == "constant" and mats.shape[0] != 1:
            raise ValueError("constant profile takes exactly one matrix")
        if mats.shape[0] != bps.size + 1:
            raise ValueError(
                f"{mats.shape[0]} matrices need {mats.shape[0] - 1} breakpoints, got {bps.size}")
        if bps.size and np.any(np.diff(bps) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        check_ellipticity(mats, self.lam)
        mats = 0.5 * (mats + np.swapaxes(mats, -1, -2))
        mats.setflags(write=False)
        bps.setflags(write=False)
        object.__setattr__(self, "matrices", mats)
        object.__setattr__(self, "breakpoints", bps)

    # -- constructors -------------------------------------------------------
    @classmethod
    def constant(cls, matrix, lam: float | None = None) -> "TimeMatrixProfile":
        m = _as_matrix_stack(matrix)
        if lam is None:
            eig = np.linalg.eigvalsh(m[0])
            lam = max(1.0, float(eig.max()), 1.0 / float(eig.min()))
        return cls("constant", lam, m.shape[1], np.zeros(0), m)

    @classmethod
    def identity(cls, d: int) -> "TimeMatrixProfile":
        return cls.constant(np.eye(d), 1.0)

    @classmethod
    def piecewise(cls, breakpoints, matrices, lam: float) -> "TimeMatrixProfile":
        m = _as_matrix_stack(matrices)
        return cls("piecewise-constant", lam, m.shape[1], np.asarray(breakpoints, float), m)

    @classmethod
    def seeded(cls, seed: int, segments: int, lam: float, dim: int = 1,
               horizon: float = 1.0, spacing: str = "uniform") -> "TimeMatrixProfile":
        """Random piecewise profile: ``segments`` pieces on [0, horizon].

        Eigenvalues are log-uniform in [1/lam, lam], eigenvectors Haar-random.
        ``spacing`` is "uniform" (sorted uniform breakpoints) or "geometric"
        (jittered log-spaced breakpoints down to 1e-4 * horizon).
        """
        rng = make_rng(seed)
        nb = segments - 1
        if spacing == "uniform":
            bps = np.sort(rng.uniform(0.0, horizon, size=nb)) if nb > 0 else np.zeros(0)
        elif spacing == "geometric":
            base = np.geomspace(1e-4 * horizon, horizon, nb) if nb > 0 else np.zeros(0)
            jitter = np.exp(rng.uniform(-0.3, 0.3, size=nb)) if nb > 0 else 1.0
            bps = np.sort(base * jitter)
        else:
            raise ValueError(f"unknown spacing {spacing!r}")
        if bps.size:
            bps = np.unique(bps)
            while bps.size < nb:  # measure-zero collision; top up deterministically
                bps = np.unique(np.append(bps, rng.uniform(0.0, horizon)))
        mats = random_spd(rng, segments, dim, lam)
        meta = {"seed": seed, "segments": segments, "horizon": horizon, "spacing": spacing}
        return cls("seeded-random-piecewise", lam, dim, bps, mats, meta=meta)

    @classmethod
    def smooth(cls, func, lam: float, dim: int, horizon: float = 1.0) -> "TimeMatrixProfile":
        return cls("smooth-sampled", lam, dim, func=func, meta={"horizon": horizon})

    # -- evaluation ---------------------------------------------------------
    @property
    def is_piecewise(self) -> bool:
        return self.kind != "smooth-sampled"

    def value(self, t) -> np.ndarray:
        """a(t); vectorised over t (returns shape t.shape + (d, d))."""
        t = np.asarray(t, dtype=float)
        if self.is_piecewise:
            idx = np.searchsorted(self.breakpoints, t, side="right")
            return self.matrices[idx]
        flat = np.atleast_1d(t).ravel()
        vals = np.stack([np.atleast_2d(self.func(float(s))) for s in flat])
        return vals.reshape(t.shape + (self.dim, self.dim))

    def derivative(self, t: float) -> np.ndarray:
        """a'(t) (a.e.). Zero for piecewise kinds, central difference otherwise."""
        if self.is_piecewise:
            return np.zeros((self.dim, self.dim))
        h = 1e-5 * max(1.0, abs(t))
        return (self.value(t + h) - self.value(t - h)) / (2 * h)

    def mean_value(self, t0: float, t1: float) -> np.ndarray:
        """Average of a over [t0, t1] (exact for the piecewise kinds)."""
        if not t1 > t0:
            return self.value(t0)
        if self.is_piecewise:
            inner = self.breakpoints[(self.breakpoints > t0) & (self.breakpoints < t1)]
            edges = np.concatenate(([t0], inner, [t1]))
            mats = self.value(0.5 * (edges[:-1] + edges[1:]))
            return np.tensordot(np.diff(edges), mats, axes=(0, 0)) / (t1 - t0)
        x, w = gauss_legendre(8)
        mats = self.value(0.5 * (t0 + t1) + 0.5 * (t1 - t0) * x)
        return 0.5 * np.tensordot(w, mats, axes=(0, 0))

    def near_breakpoint(self, t: float, width: float) -> bool:
        if not self.is_piecewise or self.breakpoints.size == 0:
            return False
        return bool(np.any(np.abs(self.breakpoints - t) <= width))

    def shifted(self, s: float) -> "TimeMatrixProfile":
        """The profile sigma -> a(s + sigma)."""
        if s == 0:
            return self
        if self.is_piecewise:
            return TimeMatrixProfile(self.kind, self.lam, self.dim, self.breakpoints - s,
                                     self.matrices, meta=dict(self.meta, shift=s))
        f = self.func
        meta = dict(self.meta, horizon=max(float(self.meta.get("horizon", 1.0)) - s, 1e-12))
        return TimeMatrixProfile(self.kind, self.lam, self.dim, func=lambda u: f(s + u), meta=meta)

    def to_dict(self) -> dict:
        if self.kind == "seeded-random-piecewise":
            return {"kind": "seeded", "seed": self.meta["seed"], "segments": self.meta["segments"],
                    "lambda": self.lam, "dim": self.dim, "horizon": self.meta["horizon"],
                    "spacing": self.meta["spacing"]}
        if self.is_piecewise:
            return {"kind": "piecewise" if self.kind != "constant" else "constant",
                    "breakpoints": self.breakpoints.tolist(),
                    "matrices": self.matrices.tolist(), "lambda": self.lam}
        raise KFPError("smooth-sampled profiles wrap a callable and cannot be serialised")


def random_spd(rng, n: int, d: int, lam: float) -> np.ndarray:
    """n symmetric matrices with spectra log-uniform in [1/lam, lam]."""
    eig = np.exp(rng.uniform(-math.log(lam), math.log(lam), size=(n, d)))
    out = np.empty((n, d, d))
    for k in range(n):
        if d == 1:
            q = np.ones((1, 1))
        else:
            z = rng.standard_normal((d, d))
            q, r = np.linalg.qr(z)
            q = q * np.sign(np.diag(r))
        out[k] = (q * eig[k]) @ q.T
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def profile_from_dict(doc: dict) -> TimeMatrixProfile:
    kind = _ALIASES.get(doc.get("kind", ""))
    lam = float(doc.get("lambda", doc.get("lam", 1.0)))
    if kind == "seeded-random-piecewise":
        return TimeMatrixProfile.seeded(int(doc["seed"]), int(doc.get("segments", 16)), lam,
                                        int(doc.get("dim", 1)), float(doc.get("horizon", 1.0)),
                                        doc.get("spacing", "uniform"))
    if kind == "constant":
        mats = doc.get("matrix", doc.get("matrices"))
        m = _as_matrix_stack(mats)
        return TimeMatrixProfile("constant", lam, m.shape[1], np.zeros(0), m[:1])
    if kind == "piecewise-constant":
        m = _as_matrix_stack(doc["matrices"])
        return TimeMatrixProfile("piecewise-constant", lam, m.shape[1],
                                 np.asarray(doc.get("breakpoints", []), float), m)
    raise ValueError(f"cannot build a profile from kind {doc.get('kind')!r}")


def load_profile(path) -> TimeMatrixProfile:
    return profile_from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class KineticMatrices:
    t: float
    A0: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    P: np.ndarray
    M: np.ndarray
    quadrature_error: float
    A0_eig: tuple
    P_eig: tuple

    @property
    def d(self) -> int:
        return self.A0.shape[0]

    @property
    def A0_inv(self) -> np.ndarray:
        w, q = self.A0_eig
        return (q / w) @ q.T

    @property
    def P_inv(self) -> np.ndarray:
        w, q = self.P_eig
        return (q / w) @ q.T

    @property
    def logdet_A0(self) -> float:
        return float(np.sum(np.log(self.A0_eig[0])))

    @property
    def logdet_P(self) -> float:
        return float(np.sum(np.log(self.P_eig[0])))


def _moment_integrals(profile: TimeMatrixProfile, t: float, tol: float):
    d = profile.dim
    if profile.is_piecewise:
        inner = profile.breakpoints[(profile.breakpoints > 0) & (profile.breakpoints < t)]
        edges = np.concatenate(([0.0], inner, [t]))
        mats = profile.value(0.5 * (edges[:-1] + edges[1:]))
        out = []
        for i in range(3):
            w = (edges[1:] ** (i + 1) - edges[:-1] ** (i + 1)) / (i + 1)
            out.append(np.tensordot(w, mats, axes=(0, 0)))
        return out, 0.0

    # sigma = s / t on [0, 1]: A_i = t^{i+1} int_0^1 sigma^i a(t sigma) d sigma
    def integrand(sig):
        a = profile.value(t * sig)
        pw = sig[:, None, None, None] ** np.arange(3)[None, :, None, None]
        return pw * a[:, None, :, :]

    val, err = adaptive_gauss_legendre(integrand, 0.0, 1.0, tol=tol)
    out = [t ** (i + 1) * val[i] for i in range(3)]
    return out, float(err)


def assemble_matrices(profile: TimeMatrixProfile, t: float, tol: float = 1e-10) -> KineticMatrices:
    """A0, A1, A2, P and M at time t > 0.

    ``quadrature_error`` is relative to the rescaled integrals (0 for the
    piecewise kinds, whose segment integrals are exact).
    """
    if not t > 0:
        raise PreconditionError(f"matrices are defined for t > 0, got {t}")
    (A0, A1, A2), err = _moment_integrals(profile, float(t), tol)
    A0 = 0.5 * (A0 + A0.T)
    A1 = 0.5 * (A1 + A1.T)
    A2 = 0.5 * (A2 + A2.T)
    w0, q0 = np.linalg.eigh(A0)
    if not w0.min() > 0:
        raise KFPError(f"A0({t}) is singular (eigenvalues {w0}); the profile is not elliptic")
    A0inv_A1 = (q0 / w0) @ (q0.T @ A1)
    P = A2 - A1 @ A0inv_A1
    P = 0.5 * (P + P.T)
    M = t * np.eye(profile.dim) - A0inv_A1
    wp, qp = np.linalg.eigh(P)
    if not wp.min() > 0:
        raise KFPError(f"P({t}) lost positivity (eigenvalues {wp})")
    return KineticMatrices(float(t), A0, A1, A2, P, M, err, (w0, q0), (wp, qp))


# ---------------------------------------------------------------------------


def p_bracket(lam: float) -> tuple[float, float]:
    """Sharp bracket for w.P(t)w / (t^3 |w|^2).

    P(t) is the Schur complement of int_0^t [1 s]^T[1 s] (x) a(s) ds, so
    w.Pw = min_u int_0^t (u + s w).a(s)(u + s w) ds, which lies between
    (1/lam) and lam times t^3 |w|^2 / 12.
    """
    return 1.0 / (12.0 * lam), lam / 12.0


@dataclass
class BoundReport:
    times: np.ndarray
    directions: np.ndarray
    p_ratio: np.ndarray  # (nt, nw): w.Pw / t^3
    a_ratio: np.ndarray  # (nt, 3, nw): |A_i w| / t^{i+1}
    m_ratio: np.ndarray  # (nt, nw): |M w| / t
    bracket: tuple
    lam: float
    slopes: np.ndarray  # log-log slope of w.Pw vs t per direction

    @property
    def c_lo(self) -> float:
        return float(self.p_ratio.min())

    @property
    def c_hi(self) -> float:
        return float(self.p_ratio.max())

    @property
    def violation(self) -> bool:
        lo, hi = self.bracket
        tol = 1e-12
        bad_p = (self.p_ratio < lo * (1 - tol)) | (self.p_ratio > hi * (1 + tol))
        finite = np.all(np.isfinite(self.p_ratio)) and np.all(np.isfinite(self.a_ratio))
        return bool(np.any(bad_p) or not finite or np.any(self.p_ratio <= 0))

    def summary(self) -> dict:
        return {
            "lambda": self.lam,
            "bracket_lo": self.bracket[0],
            "bracket_hi": self.bracket[1],
            "c_lo": self.c_lo,
            "c_hi": self.c_hi,
            "a_ratio_min": self.a_ratio.min(axis=(0, 2)).tolist(),
            "a_ratio_max": self.a_ratio.max(axis=(0, 2)).tolist(),
            "m_ratio_max": float(self.m_ratio.max()),
            "slope_min": float(self.slopes.min()) if self.slopes.size else float("nan"),
            "slope_max": float(self.slopes.max()) if self.slopes.size else float("nan"),
            "violation": self.violation,
        }

    def rows(self):
        for i, t in enumerate(self.times):
            for k in range(self.directions.shape[0]):
                yield {"t": float(t), "direction": k, "p_ratio": float(self.p_ratio[i, k]),
                       "a0_ratio": float(self.a_ratio[i, 0, k]), "a1_ratio": float(self.a_ratio[i, 1, k]),
                       "a2_ratio": float(self.a_ratio[i, 2, k]), "m_ratio": float(self.m_ratio[i, k])}


def loglog_slope(t, y) -> float:
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    return float(np.polyfit(np.log(t), np.log(y), 1)[0])


def verify_matrix_bounds(profile: TimeMatrixProfile, times: Sequence[float],
                         directions, tol: float = 1e-10, executor=None) -> BoundReport:
    times = np.asarray(times, float)
    W = np.atleast_2d(np.asarray(directions, float))
    if times.size == 0 or W.size == 0:
        raise PreconditionError("need at least one time and one direction")
    if W.shape[1] != profile.dim:
        raise PreconditionError("direction dimension does not match the profile")
    W = W / np.linalg.norm(W, axis=1, keepdims=True)

    def one(t):
        km = assemble_matrices(profile, float(t), tol)
        p = np.einsum("ki,ij,kj->k", W, km.P, W) / t**3
        a = np.stack([np.linalg.norm(W @ A.T, axis=1) / t ** (i + 1)
                      for i, A in enumerate((km.A0, km.A1, km.A2))])
        m = np.linalg.norm(W @ km.M.T, axis=1) / t
        return p, a, m

    results = list(executor.map(one, times)) if executor is not None else [one(t) for t in times]
    p_ratio = np.stack([r[0] for r in results])
    a_ratio = np.stack([r[1] for r in results])
    m_ratio = np.stack([r[2] for r in results])
    if times.size >= 2:
        slopes = np.array([loglog_slope(times, p_ratio[:, k] * times**3) for k in range(W.shape[0])])
    else:
        slopes = np.zeros(0)
    return BoundReport(times, W, p_ratio, a_ratio, m_ratio, p_bracket(profile.lam), profile.lam, slopes)


@dataclass
class DynamicsReport:
    times: np.ndarray
    h: np.ndarray
    err_h: np.ndarray  # max entrywise |FD_h - M^T a M|
    err_h2: np.ndarray  # same with h/2
    err_richardson: np.ndarray
    min_eig_mtam: np.ndarray

    @property
    def observed_order(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log2(self.err_h / self.err_h2)

    @property
    def max_error(self) -> float:
        return float(np.max(self.err_h2))

    @property
    def psd(self) -> bool:
        return bool(np.all(self.min_eig_mtam >= -1e-10))

    def summary(self) -> dict:
        return {"max_error_h": float(self.err_h.max()), "max_error_h2": self.max_error,
                "max_error_richardson": float(self.err_richardson.max()),
                "min_observed_order": float(np.nanmin(self.observed_order)),
                "psd": self.psd}


def mtam(profile: TimeMatrixProfile, km: KineticMatrices, t: float) -> np.ndarray:
    a = profile.value(t)
    return km.M.T @ a @ km.M


def verify_p_dynamics(profile: TimeMatrixProfile, times: Sequence[float], rel_step: float = 1e-2,
                      tol: float = 1e-12) -> DynamicsReport:
    """Compare a central difference of P(t) with M^T a M (both a.e. in t)."""
    times = np.asarray(times, float)
    hs, e1, e2, er, mins = [], [], [], [], []
    for t in times:
        h = rel_step * t
        if profile.near_breakpoint(t, h * 1.0000001):
            raise PreconditionError(f"t={t} lies within the difference stencil of a breakpoint")
        if t - h <= 0:
            raise PreconditionError("difference stencil reaches t <= 0")
        km = assemble_matrices(profile, t, tol)
        target = mtam(profile, km, t)
        P = lambda s: assemble_matrices(profile, s, tol).P
        d1 = (P(t + h) - P(t - h)) / (2 * h)
        d2 = (P(t + h / 2) - P(t - h / 2)) / h
        rich = (4 * d2 - d1) / 3
        hs.append(h)
        e1.append(np.max(np.abs(d1 - target)))
        e2.append(np.max(np.abs(d2 - target)))
        er.append(np.max(np.abs(rich - target)))
        mins.append(np.linalg.eigvalsh(0.5 * (target + target.T)).min())
    return DynamicsReport(times, np.array(hs), np.array(e1), np.array(e2), np.array(er), np.array(mins))
