import numpy as np
import pytest

from tumorphase.config import DEFAULTS, default_config, load_config, parse_config_text, resolve
from tumorphase.errors import ParseError, ValidationError


def test_defaults_filled():
    cfg = resolve(parse_config_text('mode = "evolve"\n'))
    assert cfg["solver"]["dt"] == 1e-3
    assert cfg["solver"]["tol"] == 1e-10
    assert cfg["kinetics"]["host"] == cfg["kinetics"]["tumor"]
    assert cfg.mode == "evolve"


def test_positive_death_rate_cites_h2():
    text = """
[kinetics]
preset = "factored"
[kinetics.tumor]
gamma_p = 1.0
gamma_d = 1.0
f_p = "logistic"
f_d = "linear"
g_p = "one"
g_d = "one"
"""
    with pytest.raises(ValidationError) as exc:
        resolve(parse_config_text(text))
    assert any("H2" in i and "gamma_T^d" in i for i in exc.value.issues)


def test_small_grid_cites_precondition():
    with pytest.raises(ValidationError) as exc:
        resolve(parse_config_text("[geometry]\nn_cells = 2\n"))
    assert any("grid precondition" in i for i in exc.value.issues)


def test_all_issues_reported_together():
    text = """
mode = "explore"
[model]
kappa = -1.0
[solver]
dt = 0.0
"""
    with pytest.raises(ValidationError) as exc:
        resolve(parse_config_text(text))
    issues = exc.value.issues
    assert len(issues) >= 3
    assert any("mode" in i for i in issues) and any("kappa" in i for i in issues) and any("dt" in i for i in issues)


@pytest.mark.parametrize("text,needle", [("[plots]\nx = 1\n", "'plots'"), ("[model]\nkapa = 1.0\n", "model.kapa"),
                                         ("[kinetics.tumor]\ngamma9 = 1.0\n", "gamma9")])
def test_unknown_keys_rejected(text, needle):
    with pytest.raises(ValidationError) as exc:
        resolve(parse_config_text(text))
    assert any(needle in i for i in exc.value.issues)


def test_syntax_error_has_location():
    with pytest.raises(ParseError) as exc:
        parse_config_text("mode = \n", "run.toml")
    assert "run.toml" in str(exc.value) and "line 1" in str(exc.value)


def test_missing_file(tmp_path):
    with pytest.raises(ParseError):
        load_config(tmp_path / "nope.toml")


def test_builders(tmp_path):
    p = tmp_path / "run.toml"
    p.write_text("""
[constitutive]
law = "asymptotic_blowup"
p = 1.0
phi_star = 0.5
phi_max = 1.0
[kinetics]
phi_max = 0.95
[geometry]
n_cells = 16
[initial]
phi = "random"
c = "random"
""")
    cfg = load_config(p)
    pr = cfg.evolution_problem(seed=3)
    assert pr.grid.n_cells == 16
    # random data capped below the blow-up point and pinned at the far end
    assert pr.phi0.max() <= 0.95 and pr.phi0[-1] == 0.5 and pr.c0[-1] == 1.0
    again = cfg.evolution_problem(seed=3)
    np.testing.assert_array_equal(pr.phi0, again.phi0)
    assert cfg.stationary_problem().S == DEFAULTS["geometry"]["S"]


def test_presets_build():
    for preset, tumor in [("breward", {"S0": 1.0, "S1": 0.5, "S2": 0.1, "S3": 0.2, "S4": 0.3}),
                          ("threshold_logistic", {"gamma": 1.0, "c_star": 0.4}),
                          ("energy_atp", {"k": 1.0, "theta": 0.2, "Q0M": 1.0, "tau_half": 1.0}),
                          ("stress_induced", {"gamma": 1.0, "delta_s": 1.0, "sigma_lo": 0.1,
                                              "sigma_hi": 0.5, "c_star": 0.5})]:
        cfg = resolve({"kinetics": {"preset": preset, "tumor": tumor}})
        assert cfg.kinetics().name == preset


def test_default_config_round_trip():
    cfg = default_config()
    assert cfg.grid().n_cells == 64
    assert cfg.trajectory().s_of_t(0.0) == 0.5
