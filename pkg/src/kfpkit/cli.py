"""Command line front end: one subcommand per verification experiment.

Each subcommand reads a JSON config, writes its reports into ``--out`` and
prints one PASS/FAIL line per assertion. Exit codes: 0 all assertions pass,
1 an assertion failed, 2 bad arguments or config, 3 numerical failure (a
``diagnostics.json`` is written next to the reports).
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._accel import set_threads
from .errors import KFPError, NumericalFailure, QuadratureError
from .geometry import KineticCylinder, KineticPoint
from .grid import GridField
from .kernel import MomentSpec, QuadratureBudget, eval_kolmogorov, kernel_value, moment_integral, moment_scaling_scan
from .landau import (LandauBudget, LandauParams, SeparableDensity, VelocityProfile, check_abar_holder_scaling,
                     landau_field, make_scaling_frame, rough_x_density, transformed_coefficients,
                     verify_ellipticity_bounds)
from .matrices import TimeMatrixProfile, profile_from_dict, verify_matrix_bounds, verify_p_dynamics
from .regularity import (ExperimentConfig, SeminormSpec, check_interpolation, check_log_interpolation,
                         check_logholder_scaling, check_weight_interpolation, estimate_seminorm,
                         refinement_ratio, schauder_experiment, velocity_field)
from .reports import Check, ReportWriter, describe
from .rng import make_rng
from .solver import CoefficientField, solve_fd, solve_ivp_kernel, sup_discrepancy

SUBCOMMANDS = ("kernel-eval", "matrix-scan", "moments-scan", "solve", "cross-validate", "seminorm",
               "interp-check", "schauder-check", "landau-coeffs", "landau-bounds", "rescale-check")


class ConfigError(KFPError, ValueError):
    pass


@dataclass
class RunContext:
    seed: int
    executor: object
    writer: ReportWriter
    config_dir: Path


# ---------------------------------------------------------------------------
# Config helpers


def _times(spec, default=None) -> np.ndarray:
    spec = default if spec is None else spec
    if spec is None:
        raise ConfigError("missing time grid")
    if isinstance(spec, dict):
        for key, fn in (("geomspace", np.geomspace), ("linspace", np.linspace)):
            if key in spec:
                lo, hi, n = spec[key]
                return fn(float(lo), float(hi), int(n))
        raise ConfigError("time grids are lists or {geomspace|linspace: [lo, hi, n]}")
    return np.asarray(spec, float).reshape(-1)


def _profile(cfg, key="profile", default=None) -> TimeMatrixProfile:
    doc = cfg.get(key, default)
    if doc is None:
        raise ConfigError(f"missing {key!r}")
    return profile_from_dict(doc)


def _box(lo, hi, d):
    return (np.broadcast_to(np.asarray(lo, float), (d,)), np.broadcast_to(np.asarray(hi, float), (d,)))


def _named_function(doc, d: int, seed: int, period=None):
    """Test functions f(x, v) addressed by name from configs."""
    if isinstance(doc, str):
        doc = {"name": doc}
    name = doc.get("name")
    if name == "v1":
        return lambda x, v: v[..., 0]
    if name == "x1":
        return lambda x, v: x[..., 0]
    if name == "sin_v":
        w = float(doc.get("omega", 4.0))
        return lambda x, v: np.sin(w * v[..., 0])
    if name == "half_v_squared":
        return lambda x, v: 0.5 * np.sum(v * v, axis=-1)
    if name == "gaussian_v":
        return lambda x, v: np.exp(-np.sum(v * v, axis=-1))
    if name == "japanese_power_v":
        p = float(doc.get("power", 2.0))
        return lambda x, v: (1.0 + np.sum(v * v, axis=-1)) ** (-p / 2)
    if name == "gaussian":
        cx = np.asarray(doc.get("center_x", 0.0), float)
        cv = np.asarray(doc.get("center_v", 0.0), float)
        wx = float(doc.get("width_x", 1.0))
        wv = float(doc.get("width_v", 1.0))
        return lambda x, v: np.exp(-np.sum((x - cx) ** 2, axis=-1) / wx**2 - np.sum((v - cv) ** 2, axis=-1) / wv**2)
    if name == "kolmogorov":
        t0 = float(doc.get("t", 1.0))
        images = int(doc.get("images", 4))
        if period is None:
            return lambda x, v: eval_kolmogorov(t0, x, v)
        shifts = [np.asarray(k, float) * period for k in range(-images, images + 1)]
        if d != 1:
            raise ConfigError("the periodized Kolmogorov datum is implemented for d = 1")
        return lambda x, v: sum(eval_kolmogorov(t0, x + s, v) for s in shifts)
    if name == "random_smooth":
        # seeded trigonometric polynomial in x times a Gaussian envelope in v; takes both signs
        rng = make_rng(seed, 2)
        modes = int(doc.get("modes", 4))
        amp = rng.standard_normal(modes)
        phase = rng.uniform(0, 2 * np.pi, modes)
        offset = float(doc.get("offset", rng.uniform(-0.5, 0.5)))
        L = float(period[0]) if period is not None else 2 * np.pi

        def func(x, v):
            s = offset + sum(amp[k] * np.cos(2 * np.pi * (k + 1) * x[..., 0] / L + phase[k]) for k in range(modes))
            return s * np.exp(-np.sum(v * v, axis=-1))

        return func
    raise ConfigError(f"unknown test function {name!r}")


def _grid_field(doc, seed: int, config_dir: Path) -> GridField:
    """A GridField from {"path": file} or {"function": ..., "x_box": [lo, hi], "v_box": [lo, hi], ...}."""
    if "path" in doc:
        return GridField.load(config_dir / doc["path"])
    d = int(doc.get("dim", 1))
    boundary = doc.get("boundary", "periodic-x")
    x_box = _box(*doc.get("x_box", [-1.0, 1.0]), d)
    v_box = _box(*doc.get("v_box", [-1.0, 1.0]), d)
    period = (x_box[1] - x_box[0]) if boundary in ("periodic", "periodic-x") else None
    func = _named_function(doc.get("function", "v1"), d, seed, period)
    return GridField.from_function(func, x_box, v_box, doc.get("n_x", 32), doc.get("n_v", 32), boundary)


def _budget(doc) -> QuadratureBudget:
    known = set(QuadratureBudget.__dataclass_fields__)
    return QuadratureBudget(**{k: v for k, v in (doc or {}).items() if k in known})


def _landau_budget(doc) -> LandauBudget:
    known = set(LandauBudget.__dataclass_fields__)
    return LandauBudget(**{k: v for k, v in (doc or {}).items() if k in known})


def _landau_params(doc) -> LandauParams:
    doc = doc or {}
    return LandauParams(float(doc.get("gamma", -2.0)), float(doc.get("a_const", 1.0)), float(doc.get("c_const", 1.0)))


def _velocity_samples(doc) -> np.ndarray:
    if isinstance(doc, dict) and "line" in doc:
        line = doc["line"]
        e = np.asarray(line.get("direction", [1.0, 0.0, 0.0]), float)
        e = e / np.linalg.norm(e)
        speeds = _times(line.get("speeds"))
        return speeds[:, None] * e[None, :]
    if isinstance(doc, dict) and "cube" in doc:
        cube = doc["cube"]
        ax = np.linspace(-float(cube["half_width"]), float(cube["half_width"]), int(cube["n"]))
        g = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1)
        return g.reshape(-1, 3)
    return np.asarray(doc, float).reshape(-1, 3)


def _check(name, passed, detail="") -> Check:
    return Check(name, bool(passed), detail)


# ---------------------------------------------------------------------------
# Subcommands


def cmd_kernel_eval(cfg, ctx: RunContext):
    profile = _profile(cfg, default={"kind": "constant", "matrix": [[1.0]]})
    d = profile.dim
    pts = cfg.get("points", {"n": 1000})
    rng = make_rng(ctx.seed, 1)
    if isinstance(pts, dict):
        n = int(pts.get("n", 1000))
        lo, hi = pts.get("t_range", [1e-2, 2.0])
        n_times = int(pts.get("n_times", 20))
        spread = float(pts.get("spread", 2.0))
        times = np.geomspace(float(lo), float(hi), n_times)
        t = np.repeat(times, -(-n // n_times))[:n]
        # points on the kernel's own scale so that values stay representable
        x = rng.uniform(-spread, spread, (n, d)) * t[:, None] ** 1.5
        v = rng.uniform(-spread, spread, (n, d)) * t[:, None] ** 0.5
    else:
        arr = np.asarray(pts, float).reshape(-1, 1 + 2 * d)
        t, x, v = arr[:, 0], arr[:, 1:1 + d], arr[:, 1 + d:]
    values = np.empty(t.size)
    for tv in np.unique(t):
        sel = t == tv
        values[sel] = kernel_value(profile, float(tv), x[sel], v[sel])
    checks = [_check("kernel_positive", np.all(values >= 0) and np.all(np.isfinite(values)),
                     f"min {describe(values.min())}")]
    reference = cfg.get("reference")
    ref = np.full(t.size, np.nan)
    rel = np.full(t.size, np.nan)
    if reference == "kolmogorov":
        for tv in np.unique(t):
            sel = t == tv
            ref[sel] = eval_kolmogorov(float(tv), x[sel], v[sel])
        ok = ref > 1e-300
        rel[ok] = np.abs(values[ok] - ref[ok]) / ref[ok]
        tol = float(cfg.get("rtol", 1e-12))
        worst = float(np.max(rel[ok])) if ok.any() else 0.0
        checks.append(_check("kolmogorov_reduction", worst <= tol, f"max rel error {describe(worst)} (tol {tol:g})"))
    elif reference is not None:
        raise ConfigError(f"unknown reference {reference!r}")
    cols = ["t"] + [f"x{k + 1}" for k in range(d)] + [f"v{k + 1}" for k in range(d)] + ["value", "reference", "rel_error"]
    rows = [[t[i], *x[i], *v[i], values[i], ref[i], rel[i]] for i in range(t.size)]
    ctx.writer.table("kernel_values", cols, rows)
    norm = cfg.get("normalization")
    if norm:
        tol = float(norm.get("tol", 1e-6))
        budget = _budget(norm.get("budget"))
        ts = _times(norm.get("times"), [1e-3, 1e-1, 1.0, 10.0])
        mapper = ctx.executor.map if ctx.executor is not None else map
        masses = [r.value for r in mapper(lambda s: moment_integral(profile, float(s), MomentSpec(), budget), ts)]
        ctx.writer.table("normalization", ["t", "mass"], zip(ts, masses))
        for s, m in zip(ts, masses):
            checks.append(_check(f"normalization t={s:g}", abs(m - 1) <= tol, f"mass {m:.12g}"))
    return checks


def cmd_matrix_scan(cfg, ctx: RunContext):
    profile = _profile(cfg)
    times = _times(cfg.get("times"), {"geomspace": [1e-3, 1.0, 50]})
    dirs = cfg.get("directions")
    if dirs is None:
        rng = make_rng(ctx.seed, 3)
        extra = rng.standard_normal((int(cfg.get("random_directions", 4)), profile.dim))
        dirs = np.vstack([np.eye(profile.dim), extra])
    rep = verify_matrix_bounds(profile, times, dirs, executor=ctx.executor)
    ctx.writer.records("matrix_bounds", rep.rows())
    summary = rep.summary()
    lo, hi = rep.bracket
    checks = [_check("p_bracket", not rep.violation,
                     f"w.Pw/t^3 in [{describe(rep.c_lo)}, {describe(rep.c_hi)}], bracket [{describe(lo)}, {describe(hi)}]")]
    if "expected_p_ratio" in cfg:
        want = float(cfg["expected_p_ratio"])
        err = float(np.max(np.abs(rep.p_ratio / want - 1)))
        tol = float(cfg.get("p_ratio_rtol", 1e-12))
        checks.append(_check("p_ratio_exact", err <= tol, f"max rel deviation from {want:.17g}: {describe(err)}"))
    slope_tol = cfg.get("slope_tol", 0.02)
    if slope_tol is not None and rep.slopes.size:
        dev = float(np.max(np.abs(rep.slopes - 3.0)))
        checks.append(_check("p_slope", dev <= float(slope_tol),
                             f"log-log slope of w.Pw in [{describe(rep.slopes.min())}, {describe(rep.slopes.max())}] "
                             f"(3 +/- {float(slope_tol):g})"))
    dyn = cfg.get("dynamics")
    if dyn:
        dts = _times(dyn.get("times"), [0.1, 0.3, 0.7])
        drep = verify_p_dynamics(profile, dts, float(dyn.get("rel_step", 1e-2)))
        summary["dynamics"] = drep.summary()
        ctx.writer.table("p_dynamics", ["t", "h", "err_h", "err_h2", "err_richardson", "observed_order"],
                         zip(drep.times, drep.h, drep.err_h, drep.err_h2, drep.err_richardson, drep.observed_order))
        resolved = drep.err_h2 > float(dyn.get("roundoff_floor", 1e-11))
        order = float(np.min(drep.observed_order[resolved])) if resolved.any() else 2.0
        checks.append(_check("pdot_equals_mtam", order >= float(dyn.get("min_order", 1.8)) and drep.psd,
                             f"min observed FD order {describe(order)}, M^T a M psd {drep.psd}"))
        checks.append(_check("pdot_richardson", bool(np.all(drep.err_richardson <= drep.err_h2 * (1 + 1e-9) + 1e-12)),
                             f"max Richardson error {describe(drep.err_richardson.max())}"))
    ctx.writer.json("matrix_scan.json", summary)
    return checks


def cmd_moments_scan(cfg, ctx: RunContext):
    profile = _profile(cfg)
    specs = [MomentSpec.from_dict(s) for s in cfg.get("specs", [{}])]
    if cfg.get("with_shift_max"):
        specs = specs + [MomentSpec(s.j, s.alpha, s.beta, s.r, s.s, True) for s in specs if not s.shift_max]
    times = _times(cfg.get("times"), {"geomspace": [1e-3, 1e-1, 9]})
    threshold = float(cfg.get("threshold", 0.1))
    rep = moment_scaling_scan(profile, specs, times, _budget(cfg.get("budget")), ctx.executor, threshold)
    ctx.writer.records("moments", rep.rows())
    checks = []
    for spec, slope, pred, dev in zip(rep.specs, rep.slopes, rep.predicted, rep.deviations):
        checks.append(_check(f"slope {spec.label()}", abs(dev) <= threshold,
                             f"slope {slope:.4f}, predicted {pred:g}, deviation {dev:+.4f}"))
    return checks


def _coefficients(cfg, profile):
    lam = float(cfg.get("lambda", profile.lam if profile is not None else 1.0))
    return CoefficientField(profile, c=float(cfg.get("c", 0.0)), g=float(cfg.get("g", 0.0)), lam=lam)


def cmd_solve(cfg, ctx: RunContext):
    profile = _profile(cfg, default={"kind": "constant", "matrix": [[1.0]]})
    grid_doc = dict(cfg.get("grid", {}))
    grid_doc.setdefault("function", cfg.get("initial", "v1"))
    f0 = _grid_field(grid_doc, ctx.seed, ctx.config_dir)
    t_end = float(cfg.get("t_end", 1.0))
    method = cfg.get("method", "fd")
    c, g = float(cfg.get("c", 0.0)), float(cfg.get("g", 0.0))
    diag = {"method": method}
    if method == "fd":
        res = solve_fd(_coefficients(cfg, profile), f0, t_end, float(cfg.get("cfl_safety", 0.9)),
                       scheme=cfg.get("scheme", "van-leer"))
        out = res.final
        diag.update({"steps": res.steps, "dt": res.dt, **res.diagnostics})
    elif method in ("kernel-direct", "kernel-hermite"):
        if c != 0.0 or g != 0.0:
            raise ConfigError("the kernel solver handles c = g = 0 only")
        out = solve_ivp_kernel(profile, f0, t_end, method=method.split("-")[1], n_nodes=int(cfg.get("n_nodes", 48)))
    else:
        raise ConfigError(f"unknown method {method!r}")
    ctx.writer.field("solution.kfp", out)
    ctx.writer.text("solution_slice.csv", out.slice_csv())
    m0, m1 = f0.integral(), out.integral()
    diag.update({"mass_initial": m0, "mass_final": m1, "min": float(out.values.min()), "max": float(out.values.max())})
    ctx.writer.json("solve.json", diag)
    checks = [_check("finite", np.all(np.isfinite(out.values)))]
    if c == 0.0 and g == 0.0 and cfg.get("mass_tol") is not None:
        tol = float(cfg["mass_tol"])
        rel = abs(m1 - m0) / max(abs(m0), 1e-300)
        checks.append(_check("mass_conserved", rel <= tol, f"relative change {describe(rel)} (tol {tol:g})"))
    if method == "fd" and c <= 0.0 and g == 0.0:
        lo = min(float(f0.values.min()), 0.0) if c < 0 else float(f0.values.min())
        hi = max(float(f0.values.max()), 0.0) if c < 0 else float(f0.values.max())
        slack = 1e-12 * max(abs(lo), abs(hi), 1.0)
        ok = out.values.min() >= lo - slack and out.values.max() <= hi + slack
        checks.append(_check("comparison_principle", ok,
                             f"range [{describe(out.values.min())}, {describe(out.values.max())}] "
                             f"within [{describe(lo)}, {describe(hi)}]"))
    return checks


def cmd_cross_validate(cfg, ctx: RunContext):
    profiles = cfg.get("profiles", [{"kind": "constant", "matrix": [[1.0]]}])
    sizes = [int(n) for n in cfg.get("grid_sizes", [32, 64])]
    t_end = float(cfg.get("t_end", 1.0))
    xw = float(cfg.get("x_half_width", 4.0))
    vw = float(cfg.get("v_half_width", 10.0))
    tol = float(cfg.get("tolerance", 0.02))
    min_order = float(cfg.get("min_order", 1.0))
    initial = cfg.get("initial", {"name": "kolmogorov", "t": 1.0})
    rows, checks = [], []
    for i, doc in enumerate(profiles):
        profile = profile_from_dict(doc)
        label = doc.get("label", f"profile{i}")
        errs = []
        for n in sizes:
            f0 = _grid_field({"function": initial, "x_box": [-xw, xw], "v_box": [-vw, vw], "n_x": n, "n_v": n + 1},
                             ctx.seed, ctx.config_dir)
            ref = solve_ivp_kernel(profile, f0, t_end, method="direct")
            res = solve_fd(CoefficientField(profile, lam=float(doc.get("lambda", 1.0))), f0, t_end)
            errs.append(sup_discrepancy(res.final, ref))
            order = math.log2(errs[-2] / errs[-1]) if len(errs) > 1 and errs[-1] > 0 else float("nan")
            rows.append([label, n, res.steps, errs[-1], order])
        checks.append(_check(f"discrepancy {label} n={sizes[-1]}", errs[-1] <= tol,
                             f"sup-norm discrepancy {100 * errs[-1]:.3f}% (tol {100 * tol:g}%)"))
        if len(errs) > 1:
            orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
            checks.append(_check(f"convergence {label}", all(o >= min_order for o in orders),
                                 "observed orders " + ", ".join(f"{o:.2f}" for o in orders)))
    ctx.writer.table("cross_validation", ["profile", "n", "fd_steps", "discrepancy", "observed_order"], rows)
    return checks


def _closed_form(function_doc, spec: SeminormSpec):
    name = function_doc if isinstance(function_doc, str) else function_doc.get("name")
    if name != "v1":
        raise ConfigError("closed-form suprema are known for f = v1 only")
    if spec.kind == "holder_aniso":
        return 0.5 ** (1 - spec.exponent_v)
    if spec.kind == "log_holder":
        th = spec.theta
        return th**th * math.exp(-th)
    raise ConfigError(f"no closed form for kind {spec.kind!r}")


def _region(doc):
    if not doc:
        return None
    c = doc.get("center", {})
    center = None
    if c:
        center = KineticPoint(float(c.get("t", 0.0)), c.get("x", [0.0]), c.get("v", [0.0]))
    return KineticCylinder(float(doc.get("r", 1.0)), center)


def cmd_seminorm(cfg, ctx: RunContext):
    fdoc = cfg.get("field", {})
    f = _grid_field(fdoc, ctx.seed, ctx.config_dir)
    region = _region(cfg.get("region"))
    rows, details, checks = [], [], []
    for sdoc in cfg.get("seminorms", [{"kind": "holder_aniso"}]):
        spec = SeminormSpec.from_dict({"seed": ctx.seed, **sdoc})
        est = estimate_seminorm(f, spec, region)
        expected = sdoc.get("expected")
        if expected == "closed_form":
            expected = _closed_form(fdoc.get("function", "v1"), spec)
        rel = float("nan")
        if expected is not None:
            expected = float(expected)
            rel = est.value / expected - 1
            rtol = float(sdoc.get("rtol", 0.02))
            checks.append(_check(f"{spec.kind} alpha={spec.alpha:g} theta={spec.theta:g}", abs(rel) <= rtol,
                                 f"estimate {est.value:.6f}, expected {expected:.6f}, rel {100 * rel:+.3f}%"))
        rows.append([spec.kind, spec.alpha, spec.theta, spec.weight_n, est.value,
                     float("nan") if expected is None else expected, rel, est.pairs])
        details.append(est.to_dict())
    ctx.writer.table("seminorms", ["kind", "alpha", "theta", "weight_n", "value", "expected", "rel_error", "pairs"], rows)
    ctx.writer.json("seminorms.json", details)
    if not checks:
        checks.append(_check("estimated", True, f"{len(rows)} seminorm(s)"))
    return checks


def cmd_interp_check(cfg, ctx: RunContext):
    checks = []
    limit = float(cfg.get("max_constant", 20.0))
    refine_limit = float(cfg.get("refinement_factor", 4.0))
    doc = {}
    hold = cfg.get("holder")
    if hold:
        alpha = float(hold.get("alpha", 0.5))
        eps = hold.get("eps_list", [0.125, 0.25, 0.5])
        reports = []
        for n in [int(hold.get("n_v", 64))] + ([2 * int(hold.get("n_v", 64))] if hold.get("refine", True) else []):
            fld = _grid_field({**hold.get("grid", {}), "function": hold.get("function", "sin_v"), "n_v": n,
                               "boundary": "truncated-decay"}, ctx.seed, ctx.config_dir)
            reports.append(check_interpolation(fld, alpha, eps, float(hold.get("r", 0.5)), seed=ctx.seed))
        rep = reports[0]
        ctx.writer.table("interpolation", ["inequality", "eps", "lhs", "rhs", "constant"],
                         [(r.inequality, r.eps, r.lhs, r.rhs, r.constant) for r in rep.rows])
        doc["holder"] = {"constants": rep.constants(), "seminorms": rep.seminorms}
        for name, c in rep.constants().items():
            checks.append(_check(f"interpolation {name}", math.isfinite(c) and c <= limit, f"constant {c:.4f}"))
        if len(reports) > 1:
            ratio = refinement_ratio(reports[0], reports[1])
            doc["holder"]["refinement_ratio"] = ratio
            checks.append(_check("interpolation refinement", ratio <= refine_limit, f"constant ratio {ratio:.4f}"))
    logd = cfg.get("log")
    if logd:
        fld = _grid_field({**logd.get("grid", {}), "function": logd.get("function", "half_v_squared"),
                           "boundary": "truncated-decay"}, ctx.seed, ctx.config_dir)
        rep = check_log_interpolation(fld, float(logd.get("alpha", 0.5)), float(logd.get("theta", 1.0)),
                                      logd.get("eps_list", [0.1, 0.2, 0.4]), seed=ctx.seed)
        ctx.writer.table("log_interpolation", ["inequality", "eps", "lhs", "rhs", "constant"],
                         [(r.inequality, r.eps, r.lhs, r.rhs, r.constant) for r in rep.rows])
        doc["log"] = {"constants": rep.constants(), "seminorms": rep.seminorms}
        c = rep.max_constant
        checks.append(_check("log interpolation", math.isfinite(c) and c <= limit, f"constant {c:.4f}"))
    rows = []
    for wd in cfg.get("weight", []):
        func = _named_function(wd.get("function", "gaussian_v"), 1, ctx.seed)
        hw = float(wd.get("v_half_width", 6.0))
        phi = velocity_field(lambda v: func(None, v), [-hw], [hw], int(wd.get("n", 241)))
        rep = check_weight_interpolation(phi, float(wd["k"]), float(wd.get("theta", 1.0)), float(wd["mu"]),
                                         seed=ctx.seed)
        rows.append(rep.to_dict())
        fname = wd.get("function", "gaussian_v")
        fname = fname if isinstance(fname, str) else fname.get("name")
        checks.append(_check(f"weight interpolation {fname} k={rep.k:g} mu={rep.mu:g}",
                             math.isfinite(rep.constant) and rep.constant <= limit, f"constant {rep.constant:.4f}"))
    if rows:
        ctx.writer.records("weight_interpolation", rows)
    ctx.writer.json("interpolation.json", doc)
    return checks


def cmd_schauder_check(cfg, ctx: RunContext):
    config = ExperimentConfig.from_dict({**cfg, "seed": ctx.seed})
    rep = schauder_experiment(config, ctx.executor)
    ctx.writer.table("schauder", ["seed", "L", "LHS", "RHS", "rho"],
                     [(r.seed, r.L, r.lhs, r.rhs, r.rho) for r in rep.rows])
    ctx.writer.json("schauder.json", rep.to_dict())
    return [_check(f"rho variation seed={seed}", var <= rep.tolerance, f"max/min rho {var:.4f} (limit {rep.tolerance:g})")
            for seed, var in rep.variation().items()]


def _eigen_rows(fld):
    return [list(r) for r in fld.eigen_table()]


def cmd_landau_coeffs(cfg, ctx: RunContext):
    params = _landau_params(cfg.get("params"))
    h = VelocityProfile.from_dict({k: (str(ctx.config_dir / v) if k == "path" else v)
                                   for k, v in cfg.get("profile", {"kind": "maxwellian"}).items()})
    budget = _landau_budget(cfg.get("budget"))
    samples = _velocity_samples(cfg.get("v_samples", [[0.0, 0.0, 0.0]]))
    fld = landau_field(params, h, samples, budget, ctx.executor)
    ctx.writer.table("landau_eigen", ["speed", "eig_parallel", "eig_perp_min", "eig_perp_max", "cbar"], _eigen_rows(fld))
    ctx.writer.json("landau_coefficients.json",
                    {"gamma": params.gamma, "v": fld.v, "abar": fld.abar, "cbar": fld.cbar,
                     "abar_error": fld.abar_error, "cbar_error": fld.cbar_error})
    if isinstance(cfg.get("v_samples"), dict) and "cube" in cfg["v_samples"]:
        cube = cfg["v_samples"]["cube"]
        hw, n = float(cube["half_width"]), int(cube["n"])
        template = GridField(np.zeros((1, 1, 1, n, n, n)), 3, [0.0] * 3, [1.0] * 3, [-hw] * 3,
                             [2 * hw / (n - 1)] * 3, boundary="truncated-decay")
        for name, comp in fld.component_fields(template).items():
            ctx.writer.field(f"{name}.kfp", comp)
    eig = np.linalg.eigvalsh(fld.abar)
    checks = [_check("abar_psd", eig.min() >= -1e-10, f"min eigenvalue {describe(eig.min())}"),
              _check("cbar_nonnegative", np.all(fld.cbar >= 0))]
    for k, exp in enumerate(cfg.get("expected", [])):
        v = np.asarray(exp["v"], float)
        rtol = float(exp.get("rtol", 1e-4))
        idx = int(np.argmin(np.linalg.norm(fld.v - v, axis=1)))
        if np.linalg.norm(fld.v[idx] - v) > 1e-12:
            raise ConfigError("expected values must refer to listed velocity samples")
        if "abar" in exp:
            want = np.asarray(exp["abar"], float)
            err = float(np.max(np.abs(fld.abar[idx] - want)) / np.max(np.abs(want)))
            checks.append(_check(f"abar closed form #{k}", err <= rtol, f"rel error {describe(err)} (tol {rtol:g})"))
        if "cbar" in exp:
            want = float(exp["cbar"])
            err = abs(fld.cbar[idx] - want) / abs(want)
            checks.append(_check(f"cbar closed form #{k}", err <= rtol, f"rel error {describe(err)} (tol {rtol:g})"))
    return checks


def cmd_landau_bounds(cfg, ctx: RunContext):
    params = _landau_params(cfg.get("params"))
    h = VelocityProfile.from_dict(cfg.get("profile", {"kind": "maxwellian"}))
    samples = _velocity_samples(cfg.get("v_samples", {"line": {"direction": [1, 2, 2],
                                                               "speeds": {"geomspace": [2, 16, 8]}}}))
    rep = verify_ellipticity_bounds(params, h, samples, _landau_budget(cfg.get("budget")),
                                    float(cfg.get("tolerance", 0.1)), ctx.executor)
    ctx.writer.table("landau_eigen", ["speed", "eig_parallel", "eig_perp_min", "eig_perp_max", "cbar"],
                     _eigen_rows(rep.field))
    ctx.writer.json("landau_bounds.json", rep.to_dict())
    g = params.gamma
    targets = {"parallel_upper": ("parallel", g), "parallel_lower": ("parallel", g),
               "perp_upper": ("perp_max", 2 + g), "perp_lower": ("perp_min", 2 + g)}
    checks = []
    for name, passed in rep.checks.items():
        detail = ""
        if name in targets:
            key, want = targets[name]
            detail = f"slope {rep.slopes[key]:.4f} vs {want:g} +/- {rep.tolerance:g}"
        checks.append(_check(name, passed, detail))
    return checks


def cmd_rescale_check(cfg, ctx: RunContext):
    params = _landau_params(cfg.get("params"))
    h = VelocityProfile.from_dict(cfg.get("profile", {"kind": "maxwellian"}))
    budget = _landau_budget(cfg.get("budget"))
    checks = []
    direction = np.asarray(cfg.get("direction", [1.0, 0.0, 0.0]), float)
    direction = direction / np.linalg.norm(direction)
    frames = cfg.get("frames", {"speeds": [0, 4, 16], "t0": [1e-2, 1e-1, 1.0]})
    cond_limit = float(cfg.get("cond_limit", 50.0))
    rows = []
    for speed in frames.get("speeds", []):
        for t0 in frames.get("t0", []):
            frame = make_scaling_frame(KineticPoint(float(t0), np.zeros(3), float(speed) * direction), params.gamma)
            tc = transformed_coefficients(params, SeparableDensity(h), frame, budget=budget, executor=ctx.executor)
            rows.append([float(t0), float(speed), frame.r0, tc.cond_max, tc.cbar_scaled_sup])
    if rows:
        ctx.writer.table("frames", ["t0", "speed", "r0", "cond_max", "cbar_scaled_sup"], rows)
        worst = max(r[3] for r in rows)
        checks.append(_check("abar_condition", worst <= cond_limit, f"max cond {worst:.4f} (limit {cond_limit:g})"))
    doc = {}
    hold = cfg.get("holder")
    if hold:
        alpha = float(hold.get("alpha", 0.5))
        dens = rough_x_density(h, alpha, float(hold.get("amplitude", 0.5)))
        doc["holder"] = []
        for v0 in hold.get("v0_list", [[0.0, 0.0, 0.0]]):
            rep = check_abar_holder_scaling(params, dens, _times(hold.get("t0"), [1e-2, 1e-1, 1.0]), v0, alpha,
                                            int(hold.get("n", 41)), float(hold.get("tolerance", 0.15)), budget,
                                            executor=ctx.executor)
            doc["holder"].append({"v0": v0, **rep.to_dict()})
            checks.append(_check(f"abar holder slope v0={v0}", rep.ok,
                                 f"slope {rep.slope:.4f} vs {rep.predicted:g} +/- {rep.tolerance:g}"))
    logd = cfg.get("logholder")
    if logd:
        func = _named_function(logd.get("function", "v1"), 1, ctx.seed)
        theta = float(logd.get("theta", 2.0))
        reports = []
        for case in logd.get("cases", [{"t0": 0.1, "v0": 0.3}]):
            z0 = KineticPoint(float(case["t0"]), [0.0], [float(case.get("v0", 0.0))])
            rep = check_logholder_scaling(func, z0, theta, gamma=params.gamma, alpha=float(logd.get("alpha", 0.5)),
                                          n=int(logd.get("n", 64)), seed=ctx.seed)
            reports.append({**rep.to_dict(), "v0": case.get("v0", 0.0)})
        doc["logholder"] = reports
        consts = [r["constant"] for r in reports]
        limit = float(logd.get("max_constant", 10.0))
        checks.append(_check("log-holder scaling", all(math.isfinite(c) and c <= limit for c in consts),
                             f"constants in [{min(consts):.4f}, {max(consts):.4f}]"))
    ctx.writer.json("rescale.json", doc)
    return checks


HANDLERS = {
    "kernel-eval": cmd_kernel_eval,
    "matrix-scan": cmd_matrix_scan,
    "moments-scan": cmd_moments_scan,
    "solve": cmd_solve,
    "cross-validate": cmd_cross_validate,
    "seminorm": cmd_seminorm,
    "interp-check": cmd_interp_check,
    "schauder-check": cmd_schauder_check,
    "landau-coeffs": cmd_landau_coeffs,
    "landau-bounds": cmd_landau_bounds,
    "rescale-check": cmd_rescale_check,
}


HELP = {
    "kernel-eval": "evaluate the fundamental solution, optional closed-form and mass checks",
    "matrix-scan": "bounds and scaling of A0, A1, A2, P and M along a profile",
    "moments-scan": "log-log slopes of weighted derivative moments of the kernel",
    "solve": "solve the linear equation with the FD or kernel solver",
    "cross-validate": "kernel solver against the FD solver under grid refinement",
    "seminorm": "estimate Hoelder-type seminorms of a gridded function",
    "interp-check": "interpolation inequalities with measured constants",
    "schauder-check": "stability of the Schauder ratio in the time roughness of a",
    "landau-coeffs": "Landau coefficients abar and cbar at velocity samples",
    "landau-bounds": "ellipticity growth of abar against <v>",
    "rescale-check": "scaling frame: conditioning and Hoelder scaling of the rescaled coefficients",
}

# ---------------------------------------------------------------------------
# Entry points


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kfpkit", description="Kinetic Fokker-Planck verification experiments.")
    sub = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")
    sub.required = True
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", type=Path, help="JSON config (defaults apply when omitted)")
        p.add_argument("--out", type=Path, default=Path("kfpkit-out"), help="report directory")
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--format", choices=("csv", "json"), default="csv", help="table format")
    return parser


@contextmanager
def _pool(threads: int):
    set_threads(threads)
    if threads <= 1:
        yield None
        return
    with ThreadPoolExecutor(max_workers=threads) as ex:
        yield ex


def _load_config(path):
    if path is None:
        return {}, Path.cwd()
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, dict):
        raise ConfigError("the config must be a JSON object")
    return doc, Path(path).resolve().parent


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 2
    try:
        cfg, cfg_dir = _load_config(args.config)
    except (OSError, json.JSONDecodeError, ConfigError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    writer = ReportWriter(args.out, args.format)
    try:
        with _pool(args.threads) as executor, np.errstate(over="ignore", under="ignore"):
            checks = HANDLERS[args.subcommand](cfg, RunContext(seed, executor, writer, cfg_dir))
    except (NumericalFailure, QuadratureError, FloatingPointError, np.linalg.LinAlgError) as exc:
        diag = {"subcommand": args.subcommand, "error": type(exc).__name__, "message": str(exc),
                "diagnostics": getattr(exc, "diagnostics", {}), "traceback": traceback.format_exc().splitlines()[-3:]}
        writer.json("diagnostics.json", diag)
        print(f"numerical failure: {exc} (see {Path(args.out) / 'diagnostics.json'})", file=sys.stderr)
        return 3
    except (KFPError, KeyError, ValueError, TypeError) as exc:
        print(f"error: invalid config for {args.subcommand}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    for c in checks:
        print(c.line())
    writer.summary(args.subcommand, checks, {"seed": seed})
    return 0 if all(c.passed for c in checks) else 1


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
