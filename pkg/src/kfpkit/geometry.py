"""Galilean group calculus on phase space points z = (t, x, v).

The product is ``z' o z = (t' + t, x' + x + t v', v' + v)``; it is the
composition that commutes with the transport operator ``d_t + v . grad_x``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError


def _vec(a) -> np.ndarray:
    out = np.atleast_1d(np.asarray(a, dtype=float))
    if out.ndim != 1:
        raise DimensionError("position and velocity must be 1-d vectors")
    return out


@dataclass(frozen=True, eq=False)
class KineticPoint:
    t: float
    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        x, v = _vec(self.x), _vec(self.v)
        if x.shape != v.shape or x.size < 1:
            raise DimensionError(f"x and v must share a dimension d >= 1, got {x.size} and {v.size}")
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)

    @property
    def d(self) -> int:
        return self.x.size

    @classmethod
    def origin(cls, d: int) -> "KineticPoint":
        return cls(0.0, np.zeros(d), np.zeros(d))

    def as_tuple(self):
        return (self.t, self.x.copy(), self.v.copy())

    def allclose(self, other: "KineticPoint", rtol=1e-12, atol=1e-12) -> bool:
        return (
            self.d == other.d
            and np.isclose(self.t, other.t, rtol=rtol, atol=atol)
            and np.allclose(self.x, other.x, rtol=rtol, atol=atol)
            and np.allclose(self.v, other.v, rtol=rtol, atol=atol)
        )

    def __repr__(self):
        return f"KineticPoint(t={self.t!r}, x={self.x.tolist()!r}, v={self.v.tolist()!r})"


def _check_dims(a: KineticPoint, b: KineticPoint):
    if a.d != b.d:
        raise DimensionError(f"dimension mismatch: {a.d} vs {b.d}")


def compose(a: KineticPoint, b: KineticPoint) -> KineticPoint:
    """Group product a o b."""
    _check_dims(a, b)
    return KineticPoint(a.t + b.t, a.x + b.x + b.t * a.v, a.v + b.v)


def invert_into(a: KineticPoint, b: KineticPoint) -> KineticPoint:
    """a^{-1} o b."""
    _check_dims(a, b)
    dt = b.t - a.t
    return KineticPoint(dt, b.x - a.x - dt * a.v, b.v - a.v)


def inverse(a: KineticPoint) -> KineticPoint:
    return KineticPoint(-a.t, -a.x + a.t * a.v, -a.v)


def kinetic_scale(z: KineticPoint, r: float) -> KineticPoint:
    """Kinetic dilation (r^2 t, r^3 x, r v)."""
    if not r > 0:
        raise ValueError(f"scale factor must be positive, got {r}")
    return KineticPoint(r * r * z.t, r**3 * z.x, r * z.v)


# Array forms: t has shape (...), x and v have shape (..., d).

def compose_arrays(t1, x1, v1, t2, x2, v2):
    t1, t2 = np.asarray(t1, float), np.asarray(t2, float)
    x1, v1, x2, v2 = (np.asarray(a, float) for a in (x1, v1, x2, v2))
    return t1 + t2, x1 + x2 + t2[..., None] * v1, v1 + v2


def invert_into_arrays(t1, x1, v1, t2, x2, v2):
    t1, t2 = np.asarray(t1, float), np.asarray(t2, float)
    x1, v1, x2, v2 = (np.asarray(a, float) for a in (x1, v1, x2, v2))
    dt = t2 - t1
    return dt, x2 - x1 - dt[..., None] * v1, v2 - v1


@dataclass(frozen=True, eq=False)
class KineticCylinder:
    """Q_r(z0) = {t0 - r^2 < t <= t0, |x - x0 - (t - t0) v0| < r^3, |v - v0| < r}."""

    r: float
    center: KineticPoint | None = field(default=None)

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError(f"cylinder radius must be positive, got {self.r}")
        object.__setattr__(self, "r", float(self.r))

    def centered(self, d: int) -> KineticPoint:
        return self.center if self.center is not None else KineticPoint.origin(d)

    def contains_arrays(self, t, x, v) -> np.ndarray:
        """Vectorised membership; x and v carry a trailing axis of length d."""
        t = np.asarray(t, float)
        x = np.asarray(x, float)
        v = np.asarray(v, float)
        z0 = self.centered(x.shape[-1])
        if x.shape[-1] != z0.d:
            raise DimensionError("cylinder and point dimensions differ")
        r = self.r
        dt = t - z0.t
        xs = x - z0.x - dt[..., None] * z0.v
        in_t = (dt > -r * r) & (dt <= 0.0)
        in_x = np.sqrt(np.sum(xs * xs, axis=-1)) < r**3
        in_v = np.sqrt(np.sum((v - z0.v) ** 2, axis=-1)) < r
        return in_t & in_x & in_v

    def bounding_box(self, d: int):
        """(t_lo, t_hi), x-box and v-box enclosing the cylinder."""
        z0 = self.centered(d)
        r = self.r
        drift = r * r * np.abs(z0.v)
        xlo = z0.x - r**3 - drift
        xhi = z0.x + r**3 + drift
        return (z0.t - r * r, z0.t), (xlo, xhi), (z0.v - r, z0.v + r)


def cylinder_contains(Q: KineticCylinder, z: KineticPoint) -> bool:
    z0 = Q.centered(z.d)
    _check_dims(z0, z)
    return bool(Q.contains_arrays(np.array(z.t), z.x[None, :], z.v[None, :])[0])


def japanese(v) -> np.ndarray:
    """<v> = sqrt(1 + |v|^2) along the last axis."""
    v = np.asarray(v, float)
    return np.sqrt(1.0 + np.sum(v * v, axis=-1))
