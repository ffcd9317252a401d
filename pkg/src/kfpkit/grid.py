"""Uniform tensor grids over (t, x, v) and their on-disk formats.

Axis order of ``values`` is (t?, x_1..x_d, v_1..v_d). Periodic x axes hold
the points lo + i*h for i < n, so the period is n*h.

Binary container (little endian)::

    b"KFP1", uint32 d, uint32 naxes, uint64 lengths[naxes],
    float64 spacings[naxes], float64 origins[naxes], uint32 boundary,
    float64 samples (row major)

naxes is 2d without a time axis and 2d + 1 with one.
"""
from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, PreconditionError

MAGIC = b"KFP1"
BOUNDARIES = ("periodic", "periodic-x", "truncated-decay")


@dataclass(frozen=True, eq=False)
class GridField:
    values: np.ndarray
    d: int
    x_origin: np.ndarray
    x_step: np.ndarray
    v_origin: np.ndarray
    v_step: np.ndarray
    t_origin: float | None = None
    t_step: float | None = None
    boundary: str = "periodic-x"
    _axes: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=float)
        d = int(self.d)
        if d < 1:
            raise DimensionError("d must be at least 1")
        conv = lambda a: np.atleast_1d(np.asarray(a, float)).copy()
        xo, xs, vo, vs = (conv(a) for a in (self.x_origin, self.x_step, self.v_origin, self.v_step))
        if any(a.shape != (d,) for a in (xo, xs, vo, vs)):
            raise DimensionError("origins and steps need one entry per dimension")
        if np.any(xs <= 0) or np.any(vs <= 0):
            raise PreconditionError("grid spacings must be positive")
        has_t = self.t_origin is not None
        if vals.ndim != 2 * d + has_t:
            raise DimensionError(f"values have {vals.ndim} axes, expected {2 * d + has_t}")
        if has_t and not (self.t_step is not None and self.t_step > 0):
            raise PreconditionError("time spacing must be positive")
        if self.boundary not in BOUNDARIES:
            raise PreconditionError(f"boundary must be one of {BOUNDARIES}")
        if not np.all(np.isfinite(vals)):
            raise PreconditionError("grid samples must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "d", d)
        for name, a in zip(("x_origin", "x_step", "v_origin", "v_step"), (xo, xs, vo, vs)):
            object.__setattr__(self, name, a)
        if has_t:
            object.__setattr__(self, "t_origin", float(self.t_origin))
            object.__setattr__(self, "t_step", float(self.t_step))

    # -- construction ---------------------------------------------------

    @classmethod
    def from_function(cls, func, x_box, v_box, n_x, n_v, boundary: str = "periodic-x") -> "GridField":
        """Sample ``func(x, v)`` (trailing-d arrays) on a uniform (x, v) grid.

        ``x_box``/``v_box`` are (lo, hi) pairs of length-d arrays. Periodic x
        axes exclude the right end point.
        """
        xlo, xhi = (np.atleast_1d(np.asarray(a, float)) for a in x_box)
        vlo, vhi = (np.atleast_1d(np.asarray(a, float)) for a in v_box)
        d = xlo.size
        n_x = np.broadcast_to(np.asarray(n_x, int), (d,))
        n_v = np.broadcast_to(np.asarray(n_v, int), (d,))
        periodic_x = boundary in ("periodic", "periodic-x")
        xs = (xhi - xlo) / (n_x if periodic_x else n_x - 1)
        vs = (vhi - vlo) / (n_v if boundary == "periodic" else n_v - 1)
        proto = cls(np.zeros(tuple(n_x) + tuple(n_v)), d, xlo, xs, vlo, vs, boundary=boundary)
        x, v = proto.mesh()
        return proto.with_values(np.asarray(func(x, v), float))

    def with_values(self, values, t_origin=None, t_step=None) -> "GridField":
        return GridField(values, self.d, self.x_origin, self.x_step, self.v_origin, self.v_step,
                         t_origin, t_step, self.boundary)

    # -- geometry -------------------------------------------------------

    @property
    def has_time(self) -> bool:
        return self.t_origin is not None

    @property
    def space_shape(self) -> tuple:
        return self.values.shape[1:] if self.has_time else self.values.shape

    @property
    def naxes(self) -> int:
        return self.values.ndim

    def x_axis(self, k: int) -> np.ndarray:
        n = self.space_shape[k]
        return self.x_origin[k] + self.x_step[k] * np.arange(n)

    def v_axis(self, k: int) -> np.ndarray:
        n = self.space_shape[self.d + k]
        return self.v_origin[k] + self.v_step[k] * np.arange(n)

    def t_axis(self) -> np.ndarray:
        if not self.has_time:
            raise PreconditionError("field has no time axis")
        return self.t_origin + self.t_step * np.arange(self.values.shape[0])

    def x_period(self, k: int) -> float:
        return self.space_shape[k] * self.x_step[k]

    @property
    def periodic_x(self) -> bool:
        return self.boundary in ("periodic", "periodic-x")

    def mesh(self):
        """Arrays x, v of shape space_shape + (d,)."""
        axes = [self.x_axis(k) for k in range(self.d)] + [self.v_axis(k) for k in range(self.d)]
        grids = np.meshgrid(*axes, indexing="ij")
        x = np.stack(grids[: self.d], axis=-1)
        v = np.stack(grids[self.d:], axis=-1)
        return x, v

    def cell_volume(self) -> float:
        return float(np.prod(self.x_step) * np.prod(self.v_step))

    def integral(self) -> float:
        """Trapezoid-style sum over (x, v) of a spatial field (periodic axes: plain sum)."""
        if self.has_time:
            raise PreconditionError("integrate a time slice")
        w = np.ones(self.values.shape)
        if not self.periodic_x:
            for k in range(self.d):
                w = _halve_ends(w, k)
        if self.boundary != "periodic":
            for k in range(self.d):
                w = _halve_ends(w, self.d + k)
        return float(np.sum(w * self.values) * self.cell_volume())

    def time_slice(self, k: int) -> "GridField":
        if not self.has_time:
            raise PreconditionError("field has no time axis")
        return self.with_values(self.values[k])

    def final(self) -> "GridField":
        return self.time_slice(-1) if self.has_time else self

    # -- serialization --------------------------------------------------

    def spacings(self) -> np.ndarray:
        sp = np.concatenate([self.x_step, self.v_step])
        return np.concatenate([[self.t_step], sp]) if self.has_time else sp

    def origins(self) -> np.ndarray:
        og = np.concatenate([self.x_origin, self.v_origin])
        return np.concatenate([[self.t_origin], og]) if self.has_time else og

    def to_bytes(self) -> bytes:
        n = self.naxes
        head = MAGIC + struct.pack("<II", self.d, n)
        head += struct.pack(f"<{n}Q", *self.values.shape)
        head += struct.pack(f"<{n}d", *self.spacings())
        head += struct.pack(f"<{n}d", *self.origins())
        head += struct.pack("<I", BOUNDARIES.index(self.boundary))
        return head + self.values.astype("<f8").tobytes(order="C")

    @classmethod
    def from_bytes(cls, buf: bytes) -> "GridField":
        if buf[:4] != MAGIC:
            raise PreconditionError("not a KFP1 container")
        d, n = struct.unpack_from("<II", buf, 4)
        off = 12
        shape = struct.unpack_from(f"<{n}Q", buf, off)
        off += 8 * n
        steps = np.array(struct.unpack_from(f"<{n}d", buf, off))
        off += 8 * n
        origins = np.array(struct.unpack_from(f"<{n}d", buf, off))
        off += 8 * n
        (code,) = struct.unpack_from("<I", buf, off)
        off += 4
        if n not in (2 * d, 2 * d + 1) or code >= len(BOUNDARIES):
            raise PreconditionError("corrupt KFP1 header")
        count = int(np.prod(shape))
        if len(buf) - off != 8 * count:
            raise PreconditionError("KFP1 payload size does not match header")
        vals = np.frombuffer(buf, dtype="<f8", count=count, offset=off).reshape(shape)
        t0 = dt = None
        if n == 2 * d + 1:
            t0, dt = origins[0], steps[0]
            steps, origins = steps[1:], origins[1:]
        return cls(vals.astype(float), d, origins[:d], steps[:d], origins[d:], steps[d:],
                   t0, dt, BOUNDARIES[code])

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "GridField":
        return cls.from_bytes(Path(path).read_bytes())

    def slice_csv(self, time_index: int | None = None) -> str:
        """CSV of one spatial slice: columns x_1..x_d, v_1..v_d, value."""
        g = self.time_slice(time_index if time_index is not None else -1) if self.has_time else self
        x, v = g.mesh()
        cols = [f"x{k + 1}" for k in range(self.d)] + [f"v{k + 1}" for k in range(self.d)] + ["value"]
        table = np.concatenate([x.reshape(-1, self.d), v.reshape(-1, self.d),
                                g.values.reshape(-1, 1)], axis=1)
        return write_csv(cols, table)


def _halve_ends(w, axis):
    w = np.moveaxis(w, axis, 0).copy()
    w[0] *= 0.5
    w[-1] *= 0.5
    return np.moveaxis(w, 0, axis)


def format_number(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


def write_csv(columns, rows) -> str:
    """RFC 4180 CSV (CRLF line ends) with 17 significant digits."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([format_number(c) for c in row])
    return buf.getvalue()
