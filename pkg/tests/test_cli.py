import json
import subprocess
import sys

import pytest

from cdeaudit.cli import main

PROBLEM = {"v": 1.0, "D": 0.1, "length": 1.0, "bc_entry": "third", "bc_exit": "zero-gradient"}


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def test_solve_writes_outputs_and_plot(tmp_path, capsys):
    cfg = {"mode": "solve", "problem": PROBLEM, "time": {"t_end": 1.0, "n_out": 5}, "solver": {"n_cells": 20},
           "outputs": [{"kind": "solution", "path": "sol.csv"}, {"kind": "breakthrough", "path": "btc.csv"}]}
    assert main(["run", "--config", write(tmp_path, cfg), "--out-dir", str(tmp_path / "out")]) == 0
    out = capsys.readouterr().out.splitlines()
    assert sum(line.startswith("wrote ") for line in out) == 3
    assert (tmp_path / "out" / "sol.csv").read_text().startswith("t,x,c\n")
    assert "btc.csv" in (tmp_path / "out" / "plot.gp").read_text()


def test_invalid_config_lists_every_problem(tmp_path, capsys):
    cfg = {"mode": "solve", "problem": {"v": -1, "D": 0, "bc_exit": "sideways"}, "solver": {"n_cells": 2},
           "outputs": [{"kind": "solution", "path": "a.csv"}, {"kind": "flux", "path": "a.csv"}]}
    assert main(["run", "--config", write(tmp_path, cfg)]) == 1
    err = capsys.readouterr().err
    for needle in ("bc_exit", "problem.v", "problem.D", "n_cells", "distinct", "time"):
        assert needle in err


def test_missing_fit_input_is_a_config_error(tmp_path, capsys):
    cfg = {"mode": "fit", "problem": PROBLEM, "fit": {"curve": "nope.csv", "model": "fv"}}
    assert main(["fit", "--config", write(tmp_path, cfg)]) == 1
    assert "nope.csv" in capsys.readouterr().err


def test_mode_mismatch_is_a_config_error(tmp_path):
    cfg = {"mode": "audit", "problem": PROBLEM, "time": {"t_end": 1.0}}
    assert main(["solve", "--config", write(tmp_path, cfg)]) == 1


def test_claim_audit_exit_code(tmp_path, capsys):
    cfg = {"mode": "audit", "problem": {**PROBLEM, "bc_entry": "first", "D": 0.2}, "time": {"t_end": 1.0, "n_out": 5},
           "audit": {"n_cells": 20}, "outputs": [{"kind": "audit", "path": "audit.json"}], "fail_on_violation": True}
    assert main(["run", "--config", write(tmp_path, cfg), "--out-dir", str(tmp_path)]) == 3
    out = capsys.readouterr().out
    assert "claim (i): violated, margin" in out
    assert (tmp_path / "audit_deficit.csv").exists()
    cfg["fail_on_violation"] = False
    assert main(["run", "--config", write(tmp_path, cfg), "--out-dir", str(tmp_path)]) == 0
    assert main(["run", "--config", write(tmp_path, cfg), "--out-dir", str(tmp_path), "--fail-on-violation"]) == 3


def test_numerical_failure_exit_code(tmp_path, capsys):
    cfg = {"mode": "audit", "problem": {**PROBLEM, "bc_exit": "third", "g_ell": 1.0, "gamma": 1.0},
           "audit": {"steady": True, "n_cells": 20}, "outputs": [{"kind": "audit", "path": "a.json"}]}
    assert main(["run", "--config", write(tmp_path, cfg), "--out-dir", str(tmp_path)]) == 2
    assert "numerical failure during audit" in capsys.readouterr().err


def test_fit_and_compare_from_generated_curves(tmp_path, capsys):
    base = {"problem": PROBLEM, "time": {"t_end": 3.0, "n_out": 31}, "solver": {"n_cells": 50}}
    fit = {**base, "mode": "fit", "fit": {"curve": {"model": "semiinf-first", "P_true": 7.0}, "model": "semiinf-first"},
           "outputs": [{"kind": "fit", "path": "fit.json"}]}
    assert main(["run", "--config", write(tmp_path, fit, "fit.json"), "--out-dir", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "fit.json").read_text())["P_hat"] == pytest.approx(7.0, rel=1e-6)
    cmp = {**base, "mode": "compare",
           "compare": {"a": {"model": "semiinf-first"}, "b": {"model": "semiinf-third"}, "norm": "Linf"},
           "outputs": [{"kind": "comparison", "path": "cmp.json"}, {"kind": "breakthrough", "path": "a.csv", "source": "a"}]}
    assert main(["run", "--config", write(tmp_path, cmp, "cmp.json"), "--out-dir", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "cmp.json").read_text())["value"] < 1e-10
    assert "a: semiinf-first third/zero-gradient" in (tmp_path / "plot.gp").read_text()


def test_sweep_suffixes_outputs(tmp_path, monkeypatch):
    monkeypatch.setenv("CDE_PARALLELISM", "3")
    cfg = {"mode": "sweep", "problem": PROBLEM, "time": {"t_end": 1.0, "n_out": 5}, "solver": {"n_cells": 20},
           "sweep": {"mode": "solve", "overrides": [{"D": 0.1}, {"D": 0.05}, {"lambda": 1.0}]},
           "outputs": [{"kind": "breakthrough", "path": "btc.csv"}]}
    assert main(["run", "--config", write(tmp_path, cfg), "--out-dir", str(tmp_path)]) == 0
    assert sorted(p.name for p in tmp_path.glob("btc_*.csv")) == ["btc_000.csv", "btc_001.csv", "btc_002.csv"]


def test_sweep_rejects_unknown_fields(tmp_path, capsys):
    cfg = {"mode": "sweep", "problem": PROBLEM, "time": {"t_end": 1.0},
           "sweep": {"mode": "solve", "overrides": [{"Dispersion": 0.1}]}}
    assert main(["run", "--config", write(tmp_path, cfg)]) == 1
    assert "Dispersion" in capsys.readouterr().err


def test_no_curve_outputs_warns(tmp_path, capsys):
    cfg = {"mode": "solve", "problem": PROBLEM, "time": {"t_end": 1.0, "n_out": 3}, "solver": {"n_cells": 10},
           "outputs": [{"kind": "solution", "path": "s.csv"}]}
    assert main(["run", "--config", write(tmp_path, cfg), "--out-dir", str(tmp_path)]) == 0
    assert "warning" in capsys.readouterr().err
    assert not (tmp_path / "plot.gp").exists()


def test_console_entry_point(tmp_path):
    cfg = {"mode": "solve", "problem": PROBLEM, "time": {"t_end": 0.5, "n_out": 3}, "solver": {"n_cells": 10},
           "outputs": [{"kind": "breakthrough", "path": "b.csv"}]}
    proc = subprocess.run([sys.executable, "-m", "cdeaudit.cli", "run", "--config", write(tmp_path, cfg),
                           "--out-dir", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
