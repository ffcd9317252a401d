"""Quadrature rules shared by the matrix, kernel and Landau modules."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import QuadratureError


@lru_cache(maxsize=64)
def gauss_legendre(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=64)
def gauss_hermite_prob(n: int):
    """Nodes/weights for E[f(Z)], Z ~ N(0, 1)."""
    x, w = np.polynomial.hermite_e.hermegauss(n)
    w = w / np.sqrt(2.0 * np.pi)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_hermite_tensor(n: int, dim: int):
    """Tensor-product probabilists' Gauss-Hermite rule in ``dim`` dimensions.

    Returns nodes of shape (n**dim, dim) and weights summing to one.
    """
    x, w = gauss_hermite_prob(n)
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    wgrids = np.meshgrid(*([w] * dim), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    return nodes, weights


def panel_rule(breaks, order: int):
    """Composite Gauss-Legendre nodes on consecutive panels [b_k, b_{k+1}]."""
    b = np.asarray(breaks, float)
    if b.ndim != 1 or b.size < 2:
        raise ValueError("need at least two breakpoints")
    x, w = gauss_legendre(order)
    lo, hi = b[:-1], b[1:]
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def adaptive_gauss_legendre(f, a: float, b: float, tol: float = 1e-10, order: int = 10,
                            max_depth: int = 40, max_intervals: int = 20000):
    """Integrate a vector-valued ``f`` over [a, b] by interval bisection.

    ``f`` takes an array of abscissae (n,) and returns (n, ...) values. An
    interval is accepted when the single-panel estimate and the two-half
    estimate agree to within its share of ``tol`` (absolute, max-norm).
    Returns (integral, error_estimate).
    """
    if b < a:
        val, err = adaptive_gauss_legendre(f, b, a, tol, order, max_depth, max_intervals)
        return -val, err
    if b == a:
        probe = np.asarray(f(np.array([a])))
        return np.zeros(probe.shape[1:]), 0.0
    x, w = gauss_legendre(order)

    def panel(lo, hi):
        h = 0.5 * (hi - lo)
        vals = np.asarray(f(0.5 * (hi + lo) + h * x))
        return h * np.tensordot(w, vals, axes=(0, 0))

    total_len = b - a
    stack = [(a, b, panel(a, b), 0)]
    accepted = []
    err_total = 0.0
    n_done = 0
    while stack:
        lo, hi, whole, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        left, right = panel(lo, mid), panel(mid, hi)
        err = float(np.max(np.abs(left + right - whole)))
        share = tol * (hi - lo) / total_len
        n_done += 1
        if err <= share or depth >= max_depth:
            if err > share:
                raise QuadratureError(
                    f"adaptive Gauss-Legendre stalled on [{lo:.3e}, {hi:.3e}] (err {err:.2e})")
            accepted.append((lo, left + right))
            err_total += err
        else:
            stack.append((mid, hi, right, depth + 1))
            stack.append((lo, mid, left, depth + 1))
        if n_done > max_intervals:
            raise QuadratureError("adaptive Gauss-Legendre exceeded its interval budget")
    accepted.sort(key=lambda p: p[0])
    result = np.sum(np.stack([p[1] for p in accepted]), axis=0)
    return result, err_total


def trapezoid_nodes(lo: float, hi: float, n: int):
    x = np.linspace(lo, hi, n)
    w = np.full(n, (hi - lo) / (n - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    return x, w
