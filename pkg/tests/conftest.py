import numpy as np
import pytest

from tumorphase import constitutive as cst
from tumorphase import kinetics as kin
from tumorphase.geometry import Far, InterfaceTrajectory, Vascular, build_grid


def zero_pop(**kw):
    """Population with every rate switched off; override selected entries via ``kw``."""
    d = dict(gamma_p=0.0, gamma_d=0.0, lam=0.0,
             f_p=kin.f_factor("zero", 1.0), f_d=kin.f_factor("zero", 1.0),
             g_p=kin.g_factor("one"), g_d=kin.g_factor("one"),
             h=kin.f_factor("linear", 1.0), q=kin.g_factor("linear"))
    d.update(kw)
    return d


ALL_LAWS = [
    cst.PolynomialOvershoot(1.0, 2.0, 3, 0.5),
    cst.SaturatingHump(1.0, 1.0),
    cst.PowerAdhesive(2.0, 0.5),
    cst.AsymptoticBlowup(1.0, 0.5, 1.0),
]


@pytest.fixture
def mixed_grid():
    return build_grid(32, (Vascular(1.0, 1.0), Far(0.5, 1.0)))


@pytest.fixture
def porous_pair():
    return cst.build_pair(cst.PowerAdhesive(2.0, 0.5))


@pytest.fixture
def threshold_spec():
    return kin.build_kinetics(kin.CorrectedThreshold(2.0, 3.0, 0.5), delta=0.1, phi_max=0.9, c_b=1.0)


@pytest.fixture
def half_traj():
    return InterfaceTrajectory.constant(0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def golden_problem(n=64, kappa=1.0, D=1.0, S=0.4, delta=0.5):
    """Linear law and linear factors: every sup and Lipschitz constant is known by hand."""
    from tumorphase.stationary import StationaryProblem

    pm, cb = 0.9, 1.5
    pair = cst.build_pair(cst.PowerAdhesive(1.0, 0.5))
    lin = kin.f_factor("linear", pm)

    def pop(gp, gd, lam):
        return dict(gamma_p=gp, gamma_d=gd, lam=lam, f_p=lin, f_d=lin, g_p=kin.g_factor("one"),
                    g_d=kin.g_factor("linear"), h=lin, q=kin.g_factor("linear"))

    spec = kin.make_spec(pop(0.3, -0.2, 0.4), pop(0.1, -0.05, 0.25), delta, pm, cb)
    grid = build_grid(n, (Vascular(1.0, cb), Far(0.5, cb)))
    return StationaryProblem(grid, pair, spec, kappa, D, S)


# --- acceptance reporting -----------------------------------------------------------

_ACCEPTANCE = []


def record_acceptance(number, title, passed, detail=""):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {title}" + (f" ({detail})" if detail else "")
    _ACCEPTANCE.append((number, line))
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
