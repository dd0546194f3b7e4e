import json

import numpy as np
import pytest
from click.testing import CliRunner

from tumorphase.cli import main

TRIVIAL = """
mode = "stationary"
[kinetics]
preset = "factored"
delta = 0.0
[kinetics.tumor]
gamma_p = 0.0
gamma_d = 0.0
f_p = "zero"
f_d = "zero"
g_p = "one"
g_d = "one"
lam = 0.0
[geometry]
n_cells = 16
"""


@pytest.fixture
def runner():
    return CliRunner()


def write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_selftest_passes(runner, tmp_path):
    res = runner.invoke(main, ["selftest", "--out", str(tmp_path)])
    assert res.exit_code == 0, res.output
    assert "FAIL" not in res.output
    report = json.loads((tmp_path / "selftest.json").read_text())
    assert report["passed"] and len(report["checks"]) >= 10


def test_stationary_trivial_writes_constant_columns(runner, tmp_path):
    cfg = write(tmp_path, TRIVIAL)
    res = runner.invoke(main, ["stationary", "solve", "--config", cfg, "--out", str(tmp_path / "o"), "--quiet"])
    assert res.exit_code == 0, res.output
    data = np.genfromtxt(tmp_path / "o" / "stationary.csv", delimiter=",", names=True)
    assert np.all(data["phi"] == 0.5) and np.all(data["c"] == 1.0)
    meta = json.loads((tmp_path / "o" / "stationary.csv.meta.json").read_text())
    assert meta["config"]["resolved"]["geometry"]["n_cells"] == 16
    for name in ("stationary.gp", "stationary.png", "stationary_report.json"):
        assert (tmp_path / "o" / name).exists()


def test_run_dispatches_on_mode(runner, tmp_path):
    cfg = write(tmp_path, TRIVIAL)
    res = runner.invoke(main, ["run", "--config", cfg, "--out", str(tmp_path / "o")])
    assert res.exit_code == 0
    assert json.loads(res.output)["mode"] == "stationary"


def test_evolve_outputs_are_deterministic(runner, tmp_path):
    cfg = write(tmp_path, """
[geometry]
n_cells = 16
[solver]
t_max = 0.01
[initial]
phi = "random"
c = "random"
[output]
snapshot_every = 5
plots = false
""")
    for d in ("a", "b"):
        res = runner.invoke(main, ["evolve", "--config", cfg, "--out", str(tmp_path / d), "--seed", "5", "--quiet"])
        assert res.exit_code == 0, res.output
    a = (tmp_path / "a" / "evolve.csv").read_bytes()
    assert a == (tmp_path / "b" / "evolve.csv").read_bytes()
    header = a.decode().splitlines()[0]
    assert header == "t,x,phi,c"
    assert len(a.decode().splitlines()) == 1 + 3 * 17
    assert not (tmp_path / "a" / "evolve_phi.png").exists()
    assert (tmp_path / "a" / "evolve.csv.meta.json").exists()


def test_dependence_report(runner, tmp_path):
    cfg = write(tmp_path, """
[geometry]
n_cells = 16
[solver]
t_max = 0.01
[dependence]
eps = [0.1, 0.01]
""")
    res = runner.invoke(main, ["dependence", "--config", cfg, "--out", str(tmp_path), "--quiet"])
    assert res.exit_code == 0, res.output
    rep = json.loads((tmp_path / "dependence.json").read_text())
    assert [r["eps"] for r in rep["reports"]] == [0.1, 0.01]
    assert all(r["ratio"] > 0 for r in rep["reports"])


@pytest.mark.parametrize("cmd", [["dump", "constitutive"], ["constitutive", "dump"]])
def test_constitutive_dump(runner, tmp_path, cmd):
    res = runner.invoke(main, cmd + ["--out", str(tmp_path), "--points", "11", "--quiet"])
    assert res.exit_code == 0, res.output
    lines = (tmp_path / "constitutive.csv").read_text().splitlines()
    assert lines[0] == "s,sigma,Phi,Phi_prime" and len(lines) == 12


@pytest.mark.parametrize("cmd", [["dump", "kinetics"], ["kinetics", "table"]])
def test_kinetics_table(runner, tmp_path, cmd):
    res = runner.invoke(main, cmd + ["--out", str(tmp_path), "--points", "5", "--quiet"])
    assert res.exit_code == 0, res.output
    lines = (tmp_path / "kinetics.csv").read_text().splitlines()
    assert lines[0].startswith("phi,c,Gamma_T") and len(lines) == 26


def test_poisson_selftest_alias(runner, tmp_path):
    res = runner.invoke(main, ["poisson", "selftest", "--out", str(tmp_path)])
    assert res.exit_code == 0
    assert "round trip" not in res.output and "poisson" in res.output


def test_config_error_exit_code_and_json(runner, tmp_path):
    cfg = write(tmp_path, "[geometry]\nn_cells = 2\n")
    res = runner.invoke(main, ["evolve", "--config", cfg, "--out", str(tmp_path)])
    assert res.exit_code == 2
    err = json.loads(res.stderr if hasattr(res, "stderr") else res.output)
    assert err["error"] == "ValidationError" and err["exit_code"] == 2
    assert any("grid precondition" in i for i in err["issues"])


def test_parse_error_exit_code(runner, tmp_path):
    cfg = write(tmp_path, "mode = = 1\n")
    res = runner.invoke(main, ["evolve", "--config", cfg, "--out", str(tmp_path)])
    assert res.exit_code == 2


def test_regime_error_for_stationary_without_far_end(runner, tmp_path):
    cfg = write(tmp_path, '[geometry]\nright = "vascular"\n')
    res = runner.invoke(main, ["stationary", "--config", cfg, "--out", str(tmp_path)])
    assert res.exit_code == 2


def test_solver_failure_exit_code(runner, tmp_path, monkeypatch):
    from tumorphase import evolution
    from tumorphase.errors import SolveError

    def boom(problem, callback=None):
        raise SolveError("time step underflow")

    monkeypatch.setattr(evolution, "run", boom)
    res = runner.invoke(main, ["evolve", "--out", str(tmp_path)])
    assert res.exit_code == 3


def test_internal_error_exit_code(runner, tmp_path, monkeypatch):
    from tumorphase import evolution

    def boom(problem, callback=None):
        raise KeyError("unexpected")

    monkeypatch.setattr(evolution, "run", boom)
    res = runner.invoke(main, ["evolve", "--out", str(tmp_path)])
    assert res.exit_code == 4
