import json
import subprocess
import sys
from pathlib import Path

import pytest

from kfpkit.cli import SUBCOMMANDS, run


def write(tmp_path, name, doc):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def files(out: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


SEMINORM = {"field": {"function": "v1", "x_box": [-0.5, 0.5], "v_box": [-0.5, 0.5], "n_x": 16, "n_v": 16,
                      "boundary": "truncated-decay"},
            "seminorms": [{"kind": "holder_aniso", "alpha": 0.5, "expected": "closed_form", "rtol": 0.1}]}


def test_help_lists_every_subcommand(capsys):
    assert run(["--help"]) == 0
    text = capsys.readouterr().out
    for name in SUBCOMMANDS:
        assert name in text


def test_console_script_is_installed():
    proc = subprocess.run([sys.executable, "-m", "kfpkit.cli", "matrix-scan", "--help"], capture_output=True,
                          text=True)
    assert proc.returncode == 0 and "--threads" in proc.stdout


def test_unknown_subcommand_is_a_usage_error():
    assert run(["frobnicate"]) == 2


def test_missing_or_broken_config(tmp_path):
    assert run(["seminorm", "--config", str(tmp_path / "absent.json"), "--out", str(tmp_path / "o")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(["seminorm", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert run(["seminorm", "--config", write(tmp_path, "list.json", [1, 2]), "--out", str(tmp_path / "o")]) == 2


def test_invalid_values_are_config_errors(tmp_path):
    cfg = write(tmp_path, "c.json", {"profile": {"kind": "piecewise", "breakpoints": [0.5],
                                                 "matrices": [[[1.0]], [[9.0]]], "lambda": 2.0}})
    assert run(["matrix-scan", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    cfg = write(tmp_path, "m.json", {"method": "spectral"})
    assert run(["solve", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_threads_must_be_positive(tmp_path):
    assert run(["seminorm", "--threads", "0", "--out", str(tmp_path)]) == 2


def test_passing_run_writes_summary(tmp_path, capsys):
    out = tmp_path / "o"
    assert run(["seminorm", "--config", write(tmp_path, "s.json", SEMINORM), "--out", str(out)]) == 0
    assert capsys.readouterr().out.startswith("PASS ")
    summary = json.loads((out / "summary.json").read_text())
    assert summary["passed"] and summary["subcommand"] == "seminorm"
    assert "seminorms.csv" in summary["files"] or any(f.endswith(".csv") for f in summary["files"])


def test_failing_check_exits_one(tmp_path, capsys):
    doc = json.loads(json.dumps(SEMINORM))
    doc["seminorms"][0]["expected"] = 10.0
    assert run(["seminorm", "--config", write(tmp_path, "s.json", doc), "--out", str(tmp_path / "o")]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_blow_up_exits_three_with_diagnostics(tmp_path):
    cfg = write(tmp_path, "blow.json", {
        "profile": {"kind": "constant", "matrix": [[1.0]]}, "lambda": 1000.0, "c": 1000.0, "t_end": 1.0,
        "grid": {"x_box": [-1, 1], "v_box": [-2, 2], "n_x": 4, "n_v": 9, "function": "gaussian"}})
    out = tmp_path / "o"
    assert run(["solve", "--config", cfg, "--out", str(out)]) == 3
    diag = json.loads((out / "diagnostics.json").read_text())
    assert diag["error"] == "NumericalFailure" and diag["diagnostics"]["non_finite"] > 0


def test_json_format(tmp_path):
    out = tmp_path / "o"
    cfg = write(tmp_path, "m.json", {"profile": {"kind": "constant", "matrix": [[1.0]]},
                                     "times": {"geomspace": [0.01, 1.0, 5]}})
    assert run(["matrix-scan", "--config", cfg, "--out", str(out), "--format", "json"]) == 0
    tables = [p for p in out.iterdir() if p.suffix == ".json"]
    assert tables and not any(p.suffix == ".csv" for p in out.iterdir())
    for p in tables:
        json.loads(p.read_text())


def test_csv_tables_use_crlf(tmp_path):
    out = tmp_path / "o"
    cfg = write(tmp_path, "m.json", {"profile": {"kind": "constant", "matrix": [[1.0]]},
                                     "times": {"geomspace": [0.01, 1.0, 5]}})
    assert run(["matrix-scan", "--config", cfg, "--out", str(out)]) == 0
    for p in out.glob("*.csv"):
        body = p.read_bytes()
        assert b"\r\n" in body and body.count(b"\n") == body.count(b"\r\n")


def test_same_seed_gives_identical_bytes(tmp_path):
    cfg = write(tmp_path, "s.json", {"profile": {"kind": "seeded", "seed": 3, "segments": 8, "lambda": 2.0},
                                     "grid": {"x_box": [-2, 2], "v_box": [-3, 3], "n_x": 8, "n_v": 9,
                                              "function": "random_smooth"},
                                     "t_end": 0.1, "c": -0.5})
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    for out in (a, b):
        assert run(["solve", "--config", cfg, "--out", str(out), "--seed", "7"]) == 0
    assert run(["solve", "--config", cfg, "--out", str(c), "--seed", "8"]) == 0
    assert files(a) == files(b)
    assert files(a)["solution.kfp"] != files(c)["solution.kfp"]


def test_thread_count_does_not_change_output(tmp_path):
    cfg = write(tmp_path, "l.json", {"params": {"gamma": -2.0},
                                     "profile": {"kind": "maxwellian"},
                                     "v_samples": {"cube": {"half_width": 1.0, "n": 2}},
                                     "budget": {"estimate_error": False}})
    one, four = tmp_path / "one", tmp_path / "four"
    assert run(["landau-coeffs", "--config", cfg, "--out", str(one), "--threads", "1"]) == 0
    assert run(["landau-coeffs", "--config", cfg, "--out", str(four), "--threads", "4"]) == 0
    assert files(one) == files(four)


@pytest.mark.parametrize("name", ["identity.json", "seminorm.json", "landau_coeffs.json", "solve.json",
                                  "solve_kernel.json"])
def test_shipped_configs_pass(name, configs_dir, tmp_path):
    assert run(["matrix-scan" if name == "identity.json" else
                {"seminorm.json": "seminorm", "landau_coeffs.json": "landau-coeffs", "solve.json": "solve",
                 "solve_kernel.json": "solve"}[name],
                "--config", str(Path(configs_dir) / name), "--out", str(tmp_path / "o")]) == 0
