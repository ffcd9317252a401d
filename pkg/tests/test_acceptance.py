"""Acceptance suite: one PASS/FAIL line per criterion.

Run under pytest (lines are printed even with output capture on) or as a
script, ``python3 tests/test_acceptance.py``, which prints all eleven lines
and exits nonzero when any criterion fails. Every tolerance below is the
one the criterion states; nothing is relaxed to make a line green.
"""
from __future__ import annotations

import contextlib
import io
import json
import math
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

from kfpkit.cli import run as cli_run
from kfpkit.geometry import KineticPoint
from kfpkit.grid import GridField
from kfpkit.kernel import MomentSpec, QuadratureBudget, eval_kernel, eval_kolmogorov, moment_integral
from kfpkit.landau import (LandauParams, SeparableDensity, VelocityProfile, check_abar_holder_scaling, landau_abar,
                           landau_cbar, make_scaling_frame, rough_x_density, transformed_coefficients,
                           verify_ellipticity_bounds)
from kfpkit.matrices import TimeMatrixProfile, verify_matrix_bounds, verify_p_dynamics
from kfpkit.regularity import SeminormSpec, estimate_seminorm
from kfpkit.solver import CoefficientField, solve_fd

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@dataclass
class Verdict:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float = 0.0
    budget: float | None = None

    def line(self) -> str:
        timing = f"{self.seconds:.1f}s" + (f" of {self.budget:g}s" if self.budget else "")
        return f"{'PASS' if self.passed else 'FAIL'} criterion {self.number} ({self.title}): {self.detail} [{timing}]"


def _cli(args) -> tuple[int, dict]:
    """Run the CLI quietly; returns the exit code and the summary document."""
    out = Path(args[args.index("--out") + 1])
    with contextlib.redirect_stdout(io.StringIO()):
        code = cli_run(args)
    summary = json.loads((out / "summary.json").read_text()) if (out / "summary.json").exists() else {}
    return code, summary


def _failed_checks(summary) -> list:
    return [c["name"] + ": " + c["detail"] for c in summary.get("checks", []) if not c["passed"]]


# ---------------------------------------------------------------------------
# Criteria


def kolmogorov_reduction() -> tuple[bool, str]:
    rng = np.random.default_rng(1)
    worst = 0.0
    for d in (1, 2, 3):
        prof = TimeMatrixProfile.identity(d)
        n = 10_000
        for t in np.geomspace(1e-3, 10.0, 10):
            m = n // 10
            x = rng.uniform(-2, 2, (m, d)) * t**1.5
            v = rng.uniform(-2, 2, (m, d)) * t**0.5
            got = eval_kernel(prof, float(t), x, v).value
            ref = eval_kolmogorov(float(t), x, v)
            worst = max(worst, float(np.max(np.abs(got - ref) / ref)))
    return worst <= 1e-12, f"max relative error {worst:.3g} over 3 x 10^4 points (tol 1e-12)"


def normalization() -> tuple[bool, str]:
    worst = 0.0
    for d, budget in ((1, QuadratureBudget()), (2, QuadratureBudget(n0=25))):
        for seed in range(5):
            prof = TimeMatrixProfile.seeded(seed, 16, 2.0, dim=d)
            for t in (1e-3, 1e-1, 1.0, 10.0):
                worst = max(worst, abs(moment_integral(prof, t, MomentSpec(), budget).value - 1.0))
    return worst <= 1e-6, f"max |mass - 1| = {worst:.3g} over 5 seeds, 4 times, d = 1, 2 (tol 1e-6)"


def matrix_bounds() -> tuple[bool, str]:
    times = np.geomspace(1e-3, 1.0, 50)
    lam = 2.0
    dev, lo, hi, bracket_ok, dyn_ok = 0.0, math.inf, 0.0, True, True
    min_order = math.inf
    for seed in range(20):
        prof = TimeMatrixProfile.seeded(seed, 16, lam, dim=2)
        rep = verify_matrix_bounds(prof, times, np.vstack([np.eye(2), [[1.0, 1.0], [1.0, -2.0]]]))
        bracket_ok &= not rep.violation
        lo, hi = min(lo, rep.c_lo), max(hi, rep.c_hi)
        dev = max(dev, float(np.max(np.abs(rep.slopes - 3.0))))
        safe = [t for t in np.linspace(0.05, 0.95, 60) if not prof.near_breakpoint(t, 0.011 * t)][:3]
        drep = verify_p_dynamics(prof, safe)
        resolved = drep.err_h2 > 1e-11
        if resolved.any():
            min_order = min(min_order, float(np.min(drep.observed_order[resolved])))
        dyn_ok &= drep.psd and bool(np.all(drep.err_richardson <= drep.err_h2 * (1 + 1e-9) + 1e-12))
    blo, bhi = 1 / (12 * lam), lam / 12
    dyn_ok &= min_order >= 1.8
    ok = bracket_ok and dev <= 0.02 and dyn_ok
    return ok, (f"w.Pw/t^3 in [{lo:.4f}, {hi:.4f}] within [{blo:.4f}, {bhi:.4f}]: {bracket_ok}; "
                f"max |slope - 3| = {dev:.4f} (tol 0.02); P' = M^T a M order {min_order:.2f}, Richardson ok: {dyn_ok}")


def moment_scaling(tmp: Path) -> tuple[bool, str]:
    code, summary = _cli(["moments-scan", "--config", str(CONFIGS / "rough_a.json"), "--out", str(tmp / "c4"),
                          "--threads", "4"])
    devs = [float(c["detail"].rsplit("deviation ", 1)[1]) for c in summary.get("checks", [])]
    worst = max((abs(d) for d in devs), default=math.nan)
    return code == 0, f"{len(devs)} slope fits (7 specs, with and without shift max), max |deviation| {worst:.4f} (tol 0.1)"


def cross_validation(tmp: Path) -> tuple[bool, str]:
    code, summary = _cli(["cross-validate", "--config", str(CONFIGS / "cross.json"), "--out", str(tmp / "c5")])
    detail = "; ".join(c["name"] + " " + c["detail"] for c in summary.get("checks", []))
    return code == 0, detail


def comparison_principle() -> tuple[bool, str]:
    worst = 0.0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        amp, phase = rng.standard_normal(4), rng.uniform(0, 2 * np.pi, 4)
        offset = rng.uniform(-0.5, 0.5)

        def f0(x, v):
            s = offset + sum(amp[k] * np.cos((k + 1) * np.pi * x[..., 0] / 4 + phase[k]) for k in range(4))
            return s * np.exp(-v[..., 0] ** 2)

        field = GridField.from_function(f0, ([-4.0], [4.0]), ([-6.0], [6.0]), 48, 49)
        prof = TimeMatrixProfile.seeded(seed, 8, 2.0)
        c = -float(rng.uniform(0.0, 1.0))
        out = solve_fd(CoefficientField(prof, c=c, lam=2.0), field, 0.5).final.values
        lo, hi = field.values.min(), field.values.max()
        if c < 0:
            lo, hi = min(lo, 0.0), max(hi, 0.0)
        worst = max(worst, lo - out.min(), out.max() - hi)
    return worst <= 0.0, f"largest excursion outside the data range {max(worst, 0.0):.3g} over 10 runs"


def seminorm_estimators() -> tuple[bool, str]:
    f = GridField.from_function(lambda x, v: v[..., 0], ([-0.5], [0.5]), ([-0.5], [0.5]), 64, 64, "truncated-decay")
    errs = []
    for alpha in (0.25, 0.5, 0.75):
        est = estimate_seminorm(f, SeminormSpec("holder_aniso", alpha)).value
        errs.append(("holder", alpha, est / 0.5 ** (1 - alpha) - 1))
    for theta in (1.0, 2.0, 3.0):
        est = estimate_seminorm(f, SeminormSpec("log_holder", 0.5, theta=theta)).value
        errs.append(("log", theta, est / (theta**theta * math.exp(-theta)) - 1))
    worst = max(abs(e[2]) for e in errs)
    return worst <= 0.02, f"max relative error {100 * worst:.2f}% over 3 Hoelder and 3 log-Hoelder cases (tol 2%)"


def schauder_robustness(tmp: Path) -> tuple[bool, str]:
    code, summary = _cli(["schauder-check", "--config", str(CONFIGS / "schauder.json"), "--out", str(tmp / "c8"),
                          "--threads", "3"])
    detail = "; ".join(c["detail"] for c in summary.get("checks", []))
    return code == 0, detail


def landau_coefficients() -> tuple[bool, str]:
    ball = VelocityProfile.indicator()
    p2 = LandauParams(-2.0)
    a = landau_abar(p2, ball, [0.0, 0.0, 0.0]).value
    c = landau_cbar(p2, ball, [0.0, 0.0, 0.0]).value
    err_a = float(np.max(np.abs(a - 8 * math.pi / 9 * np.eye(3)))) / (8 * math.pi / 9)
    err_c = abs(c / (4 * math.pi) - 1)
    h = VelocityProfile.maxwellian()
    vs = np.array([[0.1, 0.2, 0.3], [2.0, -1.0, 0.5], [6.0, 0.0, 0.0]])
    exact3 = all(landau_cbar(LandauParams(-3.0), h, v).value == float(h(v)) for v in vs)
    speeds = np.geomspace(2, 16, 8)
    rep = verify_ellipticity_bounds(LandauParams(-1.0), h, speeds[:, None] * np.array([1.0, 2.0, 2.0]) / 3)
    ok = err_a <= 1e-4 and err_c <= 1e-4 and exact3 and rep.ok
    return ok, (f"indicator rel errors {err_a:.2g} (abar), {err_c:.2g} (cbar), tol 1e-4; gamma = -3 exact: {exact3}; "
                f"slopes parallel {rep.slopes['parallel']:.4f} vs -1, perp {rep.slopes['perp_min']:.4f}"
                f"/{rep.slopes['perp_max']:.4f} vs 1 (tol 0.1)")


def scaling_frame() -> tuple[bool, str]:
    params = LandauParams(-2.0)
    h = VelocityProfile.maxwellian()
    worst = 0.0
    for speed in (0.0, 4.0, 16.0):
        for t0 in (1e-2, 1e-1, 1.0):
            frame = make_scaling_frame(KineticPoint(t0, np.zeros(3), np.array([speed, 0.0, 0.0])), params.gamma)
            worst = max(worst, transformed_coefficients(params, SeparableDensity(h), frame).cond_max)
    slopes = []
    for v0 in ([0.0, 0.0, 0.0], [4.0, 0.0, 0.0]):
        rep = check_abar_holder_scaling(params, rough_x_density(h, 0.5), [1e-2, 1e-1, 1.0], v0, 0.5)
        slopes.append(rep.slope)
    ok = worst <= 50 and all(abs(s - 0.25) <= 0.15 for s in slopes)
    return ok, f"max cond {worst:.3f} (limit 50); seminorm slopes {', '.join(f'{s:.4f}' for s in slopes)} vs 0.25 +/- 0.15"


DETERMINISM_CASES = {
    "kernel-eval": {"points": {"n": 200}, "reference": "kolmogorov",
                    "normalization": {"times": [0.01, 1.0], "budget": {"n0": 17}}},
    "matrix-scan": {"profile": {"kind": "seeded", "seed": 2, "segments": 8, "lambda": 2.0},
                    "times": {"geomspace": [0.001, 1.0, 12]}, "slope_tol": None, "dynamics": {"times": [0.13, 0.41]}},
    "moments-scan": {"profile": {"kind": "seeded", "seed": 0, "segments": 8, "lambda": 2.0},
                     "specs": [{"s": 1}, {"alpha": [1]}], "with_shift_max": True,
                     "times": {"geomspace": [0.001, 0.1, 3]}, "budget": {"n0": 17}, "threshold": 1.0},
    "solve": {"profile": {"kind": "seeded", "seed": 1, "segments": 8, "lambda": 2.0}, "c": -0.5, "t_end": 0.2,
              "grid": {"x_box": [-2, 2], "v_box": [-4, 4], "n_x": 12, "n_v": 17, "function": "random_smooth"}},
    "cross-validate": {"grid_sizes": [16, 32], "tolerance": 1.0, "min_order": -10},
    "seminorm": {"field": {"function": "random_smooth", "n_x": 12, "n_v": 12},
                 "seminorms": [{"kind": "holder_aniso"}, {"kind": "log_holder"}]},
    "interp-check": {"holder": {"function": "sin_v", "eps_list": [0.25], "n_v": 24,
                                "grid": {"x_box": [-0.2, 0.2], "v_box": [-0.6, 0.6], "n_x": 4}}},
    "schauder-check": {"L_values": [1, 4], "grid": 16, "n_seeds": 2, "tolerances": {"rho_variation": 100.0}},
    "landau-coeffs": {"profile": {"kind": "maxwellian"}, "v_samples": {"cube": {"half_width": 1.0, "n": 2}},
                      "budget": {"estimate_error": False}},
    "landau-bounds": {"params": {"gamma": -1.0}, "budget": {"estimate_error": False},
                      "v_samples": {"line": {"direction": [1, 2, 2], "speeds": [2, 4, 8]}}, "tolerance": 1.0},
    "rescale-check": {"frames": {"speeds": [0, 4], "t0": [0.1]}, "budget": {"estimate_error": False},
                      "logholder": {"n": 16, "cases": [{"t0": 0.1, "v0": 0.3}]}},
}


def determinism(tmp: Path) -> tuple[bool, str]:
    mismatched, files = [], 0
    for name, doc in DETERMINISM_CASES.items():
        cfg = tmp / f"{name}.json"
        cfg.write_text(json.dumps(doc))
        dumps = []
        for tag, threads in (("a", 1), ("b", 1), ("c", 4)):
            for fmt in ("csv",):
                out = tmp / f"c11-{name}-{tag}"
                code, _ = _cli([name, "--config", str(cfg), "--out", str(out), "--seed", "11",
                                "--threads", str(threads), "--format", fmt])
                if code not in (0, 1):
                    mismatched.append(f"{name} exit {code}")
                dumps.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        files += len(dumps[0])
        if not (dumps[0] == dumps[1] == dumps[2]):
            mismatched.append(name)
    detail = f"{len(DETERMINISM_CASES)} subcommands, {files} report files compared across two seeded runs and threads 1/4"
    if mismatched:
        detail += "; differing: " + ", ".join(mismatched)
    return not mismatched, detail


CRITERIA = [
    (1, "Kolmogorov reduction", kolmogorov_reduction, False, 5),
    (2, "normalization", normalization, False, 60),
    (3, "matrix bounds", matrix_bounds, False, 30),
    (4, "moment scaling", moment_scaling, True, 600),
    (5, "solver cross-validation", cross_validation, True, 300),
    (6, "comparison principle", comparison_principle, False, 60),
    (7, "seminorm estimators", seminorm_estimators, False, 30),
    (8, "Schauder robustness", schauder_robustness, True, 1200),
    (9, "Landau coefficients", landau_coefficients, False, 300),
    (10, "scaling frame", scaling_frame, False, 600),
    (11, "determinism", determinism, True, None),
]


def evaluate(number: int, tmp: Path) -> Verdict:
    _, title, fn, wants_tmp, budget = CRITERIA[number - 1]
    start = time.perf_counter()
    try:
        passed, detail = fn(tmp) if wants_tmp else fn()
    except Exception as exc:  # a crash is a failed criterion, reported on its line
        passed, detail = False, f"raised {type(exc).__name__}: {exc}"
    seconds = time.perf_counter() - start
    if budget is not None and seconds > budget:
        passed, detail = False, detail + f"; over the {budget:g}s runtime budget"
    return Verdict(number, title, bool(passed), detail, seconds, budget)


@pytest.mark.parametrize("number", [c[0] for c in CRITERIA], ids=[f"criterion_{c[0]:02d}" for c in CRITERIA])
def test_acceptance_criterion(number, tmp_path, capsys):
    verdict = evaluate(number, tmp_path)
    with capsys.disabled():
        print("\n" + verdict.line())
    assert verdict.passed, verdict.line()


def main() -> int:
    failures = 0
    with tempfile.TemporaryDirectory() as tmp:
        for number, *_ in CRITERIA:
            sub = Path(tmp) / f"c{number}"
            sub.mkdir()
            verdict = evaluate(number, sub)
            failures += not verdict.passed
            print(verdict.line(), flush=True)
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
