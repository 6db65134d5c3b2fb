from __future__ import annotations

import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from fracheat.cli import (
    EXIT_CONFIG,
    EXIT_IO,
    EXIT_MISMATCH,
    EXIT_OK,
    ConfigError,
    RunConfig,
    load_config,
    main,
    verify_report,
)
from fracheat.report import dumps, read_json

SMALL = """
[problem]
s = 0.75
[discretisation]
grid = 256
modes = 8
[control]
sweep = 4,8
probes = 4
[output]
n_max = 1000
"""


@pytest.fixture
def small_config(tmp_path):
    p = tmp_path / "small.ini"
    p.write_text(SMALL)
    return p


def run(cfg, out, *extra):
    return main([*extra, "--config", str(cfg), "--out", str(out)])


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


# ------------------------------------------------------------------ config

def test_shipped_config_matches_defaults():
    values = load_config("configs/fracheat.ini")
    cfg = RunConfig(**values).validate()
    d = RunConfig()
    assert (cfg.s, cfg.grid, cfg.modes, cfg.region, cfg.cg_tol) == (d.s, d.grid, d.modes, d.region, d.cg_tol)


@pytest.mark.parametrize("field,value", [("s", 1.2), ("s", 0.0), ("horizon", -1.0), ("modes", 0),
                                         ("region", "0.5:2"), ("initial", "mode:99"), ("epsilon", "-1"),
                                         ("sweep", "5,50"), ("method", "fem"), ("trace_times", "2.0")])
def test_invalid_settings_rejected(field, value):
    with pytest.raises(ConfigError):
        RunConfig(**{field: value}).validate()


def test_unknown_or_malformed_config_keys(tmp_path):
    p = tmp_path / "bad.ini"
    p.write_text("[problem]\nfrobnicate = 1\n")
    with pytest.raises(ConfigError):
        load_config(p)
    p.write_text("[problem]\ns = abc\n")
    with pytest.raises(ConfigError):
        load_config(p)


def test_exit_code_config_error(tmp_path, capsys):
    assert main(["eigen", "--s", "1.2", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "s must lie in (0, 1)" in capsys.readouterr().err


def test_exit_code_argparse_error():
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == EXIT_CONFIG


def test_exit_code_missing_config(tmp_path):
    assert main(["eigen", "--config", str(tmp_path / "missing.ini")]) == EXIT_IO


# ---------------------------------------------------------------- commands

def test_eigen_command(small_config, tmp_path):
    assert run(small_config, tmp_path, "eigen") == EXIT_OK
    rows = read_csv(tmp_path / "eigenvalues.csv")
    assert rows[0] == ["n", "lambda_n", "lambda_asymptotic", "abs_difference"]
    lam = np.array([float(r[1]) for r in rows[1:]])
    assert lam.size == 8 and np.all(np.diff(lam) > 0)
    assert any((tmp_path / "cache").glob("eigen-*.txt"))


@pytest.mark.parametrize("command,outputs", [("trace", ["traces.csv"]), ("solve", ["trajectory.csv"]),
                                             ("dual", ["dual_trace.csv"]),
                                             ("muntz", ["muntz.csv", "muntz.json"])])
def test_other_commands_write_outputs(small_config, tmp_path, command, outputs):
    assert run(small_config, tmp_path, command) == EXIT_OK
    for name in outputs:
        assert (tmp_path / name).stat().st_size > 0


def test_control_report_contents(small_config, tmp_path):
    assert run(small_config, tmp_path, "control") == EXIT_OK
    rep = read_json(tmp_path / "report.json")
    assert rep["N"] == 8 and rep["s"] == 0.75
    assert rep["terminal_defect"] < 1e-3
    assert set(rep["cost_sweep"]) == {"4", "8"}
    assert rep["cg"]["max_iterations"] == 80
    assert len(rep["kappa"]) == 8


def test_verify_fresh_and_tampered_reports(small_config, tmp_path, capsys):
    assert run(small_config, tmp_path, "control") == EXIT_OK
    path = tmp_path / "report.json"
    assert main(["verify", str(path)]) == EXIT_OK
    rep = read_json(path)
    rep["terminal_defect"] += 1e-6
    path.write_text(dumps(rep))
    assert main(["verify", str(path)]) == EXIT_MISMATCH
    rep = read_json(path)
    rep["psi0"][0] += 1.0
    problems = verify_report(rep)
    assert any("terminal_state" in p for p in problems)


def test_verify_io_errors(tmp_path):
    assert main(["verify", str(tmp_path / "nothing.json")]) == EXIT_IO
    (tmp_path / "bad.json").write_text("{not json")
    assert main(["verify", str(tmp_path / "bad.json")]) == EXIT_IO
    (tmp_path / "other.json").write_text('{"schema": "something else"}')
    assert main(["verify", str(tmp_path / "other.json")]) == EXIT_IO
    assert main(["verify"]) == EXIT_CONFIG


def test_regularised_low_order_run(tmp_path):
    cfg = tmp_path / "low.ini"
    cfg.write_text(SMALL.replace("s = 0.75", "s = 0.25"))
    assert run(cfg, tmp_path, "control") == EXIT_OK
    rep = read_json(tmp_path / "report.json")
    assert rep["regularized"] and rep["epsilon"] > 0


def test_steering_run(tmp_path):
    cfg = tmp_path / "steer.ini"
    cfg.write_text(SMALL + "\n[extra]\ntarget = mode:2\n")
    assert run(cfg, tmp_path, "control") == EXIT_OK
    rep = read_json(tmp_path / "report.json")
    assert rep["target"][1] == 1.0 and rep["terminal_defect"] < 1e-3
    assert main(["verify", str(tmp_path / "report.json")]) == EXIT_OK


# -------------------------------------------------------------- round trip

def test_json_numbers_round_trip_exactly():
    vals = [0.1, 1 / 3, np.pi * 1e-300, 2.0**-1074, 1e308, -0.0, 5e-324, 123456789.0]
    back = json.loads(dumps({"v": vals, "x": np.array(vals)}))
    assert back["v"] == vals and back["x"] == vals
    with pytest.raises(ValueError):
        dumps({"v": float("nan")})


def test_csv_numbers_round_trip_exactly(small_config, tmp_path):
    assert run(small_config, tmp_path, "solve") == EXIT_OK
    rows = read_csv(tmp_path / "trajectory.csv")[1:]
    for r in rows:
        assert f"{float(r[2]):.17g}" == r[2]


def test_console_script_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "fracheat.cli", "muntz", "--out", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == EXIT_OK
    assert (tmp_path / "muntz.csv").exists()
