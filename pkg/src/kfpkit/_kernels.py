"""Hot loops, each as a numba kernel and a numpy twin.

The public wrappers dispatch on ``numba_enabled()``. Each output entry is
accumulated by a single thread, so either path is bitwise reproducible
across thread counts; the two paths agree to rounding.
"""
from __future__ import annotations

import math

import numpy as np

from ._accel import njit, numba_enabled, prange

UPWIND, VAN_LEER = 0, 1
ZERO_GHOST, PERIODIC = 0, 1


# ---------------------------------------------------------------------------
# Flux-limited advection along the last axis, periodic.


@njit(cache=True, parallel=True)
def _advect_rows_nb(u, courant, limiter):
    m, n = u.shape
    out = np.empty_like(u)
    for row in prange(m):
        c = courant[row]
        ac = abs(c)
        flux = np.empty(n)
        for i in range(n):
            ip1 = (i + 1) % n
            jump = u[row, ip1] - u[row, i]
            if c >= 0.0:
                up = u[row, i]
                upjump = u[row, i] - u[row, (i - 1) % n]
            else:
                up = u[row, ip1]
                upjump = u[row, (i + 2) % n] - u[row, ip1]
            phi = 0.0
            if limiter == 1 and jump != 0.0:
                r = upjump / jump
                phi = (r + abs(r)) / (1.0 + abs(r))
            flux[i] = c * up + 0.5 * ac * (1.0 - ac) * phi * jump
        for i in range(n):
            out[row, i] = u[row, i] - (flux[i] - flux[(i - 1) % n])
    return out


def _advect_rows_np(u, courant, limiter):
    c = courant[:, None]
    ac = np.abs(c)
    up_p = u
    um1 = np.roll(u, 1, axis=1)
    up1 = np.roll(u, -1, axis=1)
    up2 = np.roll(u, -2, axis=1)
    jump = up1 - u
    pos = c >= 0.0
    up = np.where(pos, up_p, up1)
    upjump = np.where(pos, u - um1, up2 - up1)
    if limiter == VAN_LEER:
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(jump != 0.0, upjump / np.where(jump != 0.0, jump, 1.0), 0.0)
        phi = np.where(jump != 0.0, (r + np.abs(r)) / (1.0 + np.abs(r)), 0.0)
    else:
        phi = np.zeros_like(u)
    flux = c * up + 0.5 * ac * (1.0 - ac) * phi * jump
    return u - (flux - np.roll(flux, 1, axis=1))


def advect_rows(u: np.ndarray, courant: np.ndarray, limiter: int = VAN_LEER) -> np.ndarray:
    """One explicit step of u_t + c u_x = 0 per row; ``courant`` = v dt / dx, |c| <= 1."""
    u = np.ascontiguousarray(u, dtype=float)
    courant = np.ascontiguousarray(courant, dtype=float)
    if numba_enabled():
        return _advect_rows_nb(u, courant, int(limiter))
    return _advect_rows_np(u, courant, int(limiter))


# ---------------------------------------------------------------------------
# Non-divergence diffusion Tr(a D_v^2 u) with second-order centred stencils.


@njit(cache=True, parallel=True)
def _diffusion_1v_nb(u, a, h, mode):
    m, n = u.shape
    out = np.empty_like(u)
    inv = 1.0 / (h * h)
    for row in prange(m):
        for j in range(n):
            if j > 0:
                lo = u[row, j - 1]
            else:
                lo = u[row, n - 1] if mode == 1 else 0.0
            if j < n - 1:
                hi = u[row, j + 1]
            else:
                hi = u[row, 0] if mode == 1 else 0.0
            out[row, j] = a[row, j] * (hi - 2.0 * u[row, j] + lo) * inv
    return out


def _pad(u, axes, mode):
    width = [(0, 0)] * u.ndim
    for ax in axes:
        width[ax] = (1, 1)
    return np.pad(u, width, mode="wrap" if mode == PERIODIC else "constant")


def _diffusion_1v_np(u, a, h, mode):
    p = _pad(u, [1], mode)
    return a * (p[:, 2:] - 2.0 * u + p[:, :-2]) / (h * h)


@njit(cache=True, inline="always")
def _at(u, row, i, j, n1, n2, mode):
    if 0 <= i < n1 and 0 <= j < n2:
        return u[row, i, j]
    if mode == 1:
        return u[row, i % n1, j % n2]
    return 0.0


@njit(cache=True, parallel=True)
def _diffusion_2v_nb(u, a11, a12, a22, h1, h2, mode):
    m, n1, n2 = u.shape
    out = np.empty_like(u)
    for row in prange(m):
        for i in range(n1):
            for j in range(n2):
                c = u[row, i, j]
                d11 = (_at(u, row, i + 1, j, n1, n2, mode) - 2.0 * c
                       + _at(u, row, i - 1, j, n1, n2, mode)) / (h1 * h1)
                d22 = (_at(u, row, i, j + 1, n1, n2, mode) - 2.0 * c
                       + _at(u, row, i, j - 1, n1, n2, mode)) / (h2 * h2)
                d12 = (_at(u, row, i + 1, j + 1, n1, n2, mode) - _at(u, row, i + 1, j - 1, n1, n2, mode)
                       - _at(u, row, i - 1, j + 1, n1, n2, mode)
                       + _at(u, row, i - 1, j - 1, n1, n2, mode)) / (4.0 * h1 * h2)
                out[row, i, j] = a11[row, i, j] * d11 + 2.0 * a12[row, i, j] * d12 + a22[row, i, j] * d22
    return out


def _diffusion_2v_np(u, a11, a12, a22, h1, h2, mode):
    p = _pad(u, [1, 2], mode)
    c = u
    d11 = (p[:, 2:, 1:-1] - 2.0 * c + p[:, :-2, 1:-1]) / (h1 * h1)
    d22 = (p[:, 1:-1, 2:] - 2.0 * c + p[:, 1:-1, :-2]) / (h2 * h2)
    d12 = (p[:, 2:, 2:] - p[:, 2:, :-2] - p[:, :-2, 2:] + p[:, :-2, :-2]) / (4.0 * h1 * h2)
    return a11 * d11 + 2.0 * a12 * d12 + a22 * d22


def diffusion_1v(u, a, h: float, mode: int = ZERO_GHOST) -> np.ndarray:
    """a * u_vv along the last axis of a (rows, n_v) array."""
    u = np.ascontiguousarray(u, dtype=float)
    a = np.ascontiguousarray(np.broadcast_to(a, u.shape), dtype=float)
    if numba_enabled():
        return _diffusion_1v_nb(u, a, float(h), int(mode))
    return _diffusion_1v_np(u, a, float(h), int(mode))


def diffusion_2v(u, a11, a12, a22, h1: float, h2: float, mode: int = ZERO_GHOST) -> np.ndarray:
    """Tr(a D^2 u) over the last two axes of a (rows, n1, n2) array (4-point cross stencil)."""
    u = np.ascontiguousarray(u, dtype=float)
    a11, a12, a22 = (np.ascontiguousarray(np.broadcast_to(a, u.shape), dtype=float) for a in (a11, a12, a22))
    if numba_enabled():
        return _diffusion_2v_nb(u, a11, a12, a22, float(h1), float(h2), int(mode))
    return _diffusion_2v_np(u, a11, a12, a22, float(h1), float(h2), int(mode))


# ---------------------------------------------------------------------------
# Direct Galilean convolution against a Gaussian kernel.
#   out[p] = sum_q w[q] Gamma(t, xo[p] - xs[q] - t vs[q] - shift, vo[p] - vs[q])
# summed over the x-shifts in ``images`` (periodic copies).


@njit(cache=True, parallel=True)
def _gauss_convolve_nb(xo, vo, xs, vs, w, t, a_inv, p_inv, drift, lognorm, period, images):
    npts, d = xo.shape
    nsrc = xs.shape[0]
    nimg = images.shape[0]
    out = np.zeros(npts)
    for p in prange(npts):
        acc = 0.0
        dv = np.empty(d)
        q = np.empty(d)
        base = np.empty(d)
        for s in range(nsrc):
            if w[s] == 0.0:
                continue
            for k in range(d):
                dv[k] = vo[p, k] - vs[s, k]
            ev = 0.0
            for k in range(d):
                for m in range(d):
                    ev += dv[k] * a_inv[k, m] * dv[m]
            for k in range(d):
                mv = 0.0
                for m in range(d):
                    mv += dv[m] * drift[m, k]
                base[k] = xo[p, k] - xs[s, k] - t * vs[s, k] - mv
                if period[k] > 0.0:
                    base[k] -= period[k] * math.floor(base[k] / period[k] + 0.5)
            for im in range(nimg):
                for k in range(d):
                    q[k] = base[k] - images[im, k]
                ex = 0.0
                for k in range(d):
                    for m in range(d):
                        ex += q[k] * p_inv[k, m] * q[m]
                acc += w[s] * math.exp(lognorm - 0.25 * ev - 0.25 * ex)
        out[p] = acc
    return out


def _gauss_convolve_np(xo, vo, xs, vs, w, t, a_inv, p_inv, drift, lognorm, period, images, block=256):
    out = np.zeros(xo.shape[0])
    keep = w != 0.0
    xs, vs, w = xs[keep], vs[keep], w[keep]
    for start in range(0, xo.shape[0], block):
        sl = slice(start, start + block)
        dv = vo[sl, None, :] - vs[None, :, :]
        ev = np.einsum("psk,km,psm->ps", dv, a_inv, dv)
        base = xo[sl, None, :] - xs[None, :, :] - t * vs[None, :, :] - dv @ drift
        wrap = period > 0.0
        safe = np.where(wrap, period, 1.0)
        base = np.where(wrap, base - safe * np.floor(base / safe + 0.5), base)
        acc = np.zeros(ev.shape)
        for im in range(images.shape[0]):
            q = base - images[im]
            ex = np.einsum("psk,km,psm->ps", q, p_inv, q)
            acc += w[None, :] * np.exp(lognorm - 0.25 * ev - 0.25 * ex)
        out[sl] = acc.sum(axis=1)
    return out


def gauss_convolve(xo, vo, xs, vs, w, t, a_inv, p_inv, drift, lognorm, period=None,
                   images=None) -> np.ndarray:
    """Direct sum; x-differences are wrapped to the periodic cell when ``period[k] > 0``.

    ``drift`` is the matrix D with x-argument x - x~ - t v~ - (v - v~) @ D.
    """
    xo, vo, xs, vs = (np.ascontiguousarray(a, dtype=float) for a in (xo, vo, xs, vs))
    w = np.ascontiguousarray(w, dtype=float)
    d = xo.shape[1]
    images = np.zeros((1, d)) if images is None else np.ascontiguousarray(images, dtype=float)
    period = np.zeros(d) if period is None else np.ascontiguousarray(np.broadcast_to(period, (d,)), float)
    args = (xo, vo, xs, vs, w, float(t), np.ascontiguousarray(a_inv, float),
            np.ascontiguousarray(p_inv, float), np.ascontiguousarray(drift, float), float(lognorm),
            period, images)
    if numba_enabled():
        return _gauss_convolve_nb(*args)
    return _gauss_convolve_np(*args)


# ---------------------------------------------------------------------------
# Pair scans: max over pairs of |f(a) - f(b)| / denom, first index on ties.


@njit(cache=True)
def _pair_max_nb(values, first, second, denom):
    m = first.shape[0]
    k = values.shape[1]
    best = -1.0
    arg = -1
    for p in range(m):
        if denom[p] <= 0.0:
            continue
        s = 0.0
        for c in range(k):
            diff = values[first[p], c] - values[second[p], c]
            s += diff * diff
        qv = math.sqrt(s) / denom[p]
        if qv > best:
            best = qv
            arg = p
    return best, arg


def _pair_max_np(values, first, second, denom):
    ok = denom > 0.0
    if not np.any(ok):
        return -1.0, -1
    diff = values[first] - values[second]
    num = np.sqrt(np.sum(diff * diff, axis=1))
    quot = np.where(ok, num / np.where(ok, denom, 1.0), -1.0)
    arg = int(np.argmax(quot))
    return float(quot[arg]), arg


def pair_max(values, first, second, denom):
    """Largest |values[first] - values[second]| / denom and its pair index (-1 if none)."""
    values = np.ascontiguousarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    first = np.ascontiguousarray(first, dtype=np.int64)
    second = np.ascontiguousarray(second, dtype=np.int64)
    denom = np.ascontiguousarray(denom, dtype=float)
    if numba_enabled():
        best, arg = _pair_max_nb(values, first, second, denom)
        return float(best), int(arg)
    return _pair_max_np(values, first, second, denom)
