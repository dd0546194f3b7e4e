import math
import warnings

import numpy as np
import pytest

from tumorphase import constitutive as cst
from tumorphase import kinetics as kin
from tumorphase.errors import NotFactoredError, RangeError, RegimeError
from tumorphase.geometry import Far, Vascular, build_grid
from tumorphase.stationary import (StationaryProblem, coupled_residual, fixed_point_solve, multi_start,
                                   positivity_constraint_check, solve_c_given_phi, solve_phi_given_c,
                                   uniqueness_constant)

from conftest import golden_problem, zero_pop

LINEAR_PAIR = cst.build_pair(cst.PowerAdhesive(1.0, 0.5))


def grid(n, eta=2.0, cb=1.0):
    return build_grid(n, (Vascular(eta, cb), Far(0.5, cb)))


def nutrient_oracle(x, D, eta, lam, phibar, cb):
    """c'' = mu^2 c, D c'(0) = eta (c(0) - c_b), c(1) = c_b."""
    mu = math.sqrt(lam * phibar / D)
    k = eta / (D * mu)
    A = cb * (1 + k * math.sinh(mu)) / (math.cosh(mu) + k * math.sinh(mu))
    B = eta * (A - cb) / (D * mu)
    return A * np.cosh(mu * x) + B * np.sinh(mu * x)


def test_trivial_fixed_point():
    spec = kin.make_spec(zero_pop(), zero_pop(), 0.0, 1.0, 1.0)
    rep = fixed_point_solve(StationaryProblem(grid(32), LINEAR_PAIR, spec, 1.0, 1.0, 0.5))
    assert rep.converged and rep.iterations <= 2
    assert np.abs(rep.phi - 0.5).max() <= 1e-12
    assert np.abs(rep.c - 1.0).max() <= 1e-12


@pytest.mark.parametrize("n", [32, 128])
def test_nutrient_operator_matches_closed_form(n):
    lam, phibar = 3.0, 0.4
    spec = kin.make_spec(zero_pop(lam=lam), zero_pop(lam=lam), 0.0, 1.0, 1.0)
    pr = StationaryProblem(grid(n), LINEAR_PAIR, spec, 1.0, 1.0, 0.5)
    c, log = solve_c_given_phi(pr, np.full(n + 1, phibar), return_log=True)
    ex = nutrient_oracle(pr.grid.nodes, 1.0, 2.0, lam, phibar, 1.0)
    assert np.abs(c - ex).max() <= 5 / n ** 2
    assert all(b <= a + 1e-14 for a, b in zip(log.energy, log.energy[1:]))


@pytest.mark.parametrize("n", [32, 128])
def test_cell_operator_matches_closed_form(n):
    kappa, delta = 1.0, 2.0
    spec = kin.make_spec(zero_pop(), zero_pop(), delta, 1.0, 1.0)
    pr = StationaryProblem(grid(n), LINEAR_PAIR, spec, kappa, 1.0, 0.5)
    phi, log = solve_phi_given_c(pr, np.ones(n + 1), return_log=True, check_positivity=False)
    nu = math.sqrt(delta / kappa)
    ex = 0.5 * np.cosh(nu * pr.grid.nodes) / math.cosh(nu)
    assert np.abs(phi - ex).max() <= 5 / n ** 2
    assert all(b <= a + 1e-14 for a, b in zip(log.energy, log.energy[1:]))


def test_operators_reject_out_of_range_input():
    spec = kin.make_spec(zero_pop(), zero_pop(), 0.0, 0.9, 1.0)
    pr = StationaryProblem(grid(8), LINEAR_PAIR, spec, 1.0, 1.0)
    with pytest.raises(RangeError):
        solve_c_given_phi(pr, np.full(9, 0.95))
    with pytest.raises(RangeError):
        solve_phi_given_c(pr, np.full(9, 1.2))


def test_requires_far_end_and_factored_kinetics():
    spec = kin.make_spec(zero_pop(), zero_pop(), 0.0, 1.0, 1.0)
    no_far = build_grid(8, (Vascular(1.0, 1.0), Vascular(1.0, 1.0)))
    with pytest.raises(RegimeError):
        StationaryProblem(no_far, LINEAR_PAIR, spec, 1.0, 1.0)
    direct = kin.build_kinetics(kin.EnergyATP(1.0, 0.2, 1.0, 1.0), delta=0.0)
    with pytest.raises(NotFactoredError):
        StationaryProblem(grid(8), LINEAR_PAIR, direct, 1.0, 1.0)


def test_absorption_must_vanish_at_zero():
    spec = kin.make_spec(zero_pop(h=kin.f_factor("zero", 1.0), lam=1.0),
                         zero_pop(h=lambda p: 1.0 + 0 * np.asarray(p), lam=1.0), 0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        StationaryProblem(grid(8), LINEAR_PAIR, spec, 1.0, 1.0)


def test_golden_constants():
    pr = golden_problem()
    cp = 1.0 / (2 * 64 * math.sin(math.pi / 256))
    uq = uniqueness_constant(pr)
    assert uq.C_P == pytest.approx(cp, rel=1e-10)
    assert uq.branches[0] == pytest.approx(1.75, rel=1e-10)
    assert uq.branches[1] == pytest.approx(1.2, rel=1e-10)
    assert uq.branches[2] == pytest.approx(1.36 * cp ** 2, rel=1e-10)
    assert uq.C == pytest.approx(0.875, rel=1e-10)
    assert uq.threshold == pytest.approx(min(1.0, 0.5, 1.0 / cp ** 2))
    assert not uq.satisfied
    pos = positivity_constraint_check(pr)
    assert pos.C1 == pytest.approx((1 + cp ** 2) * 0.7605, rel=1e-10)
    assert pos.bound == pytest.approx(0.25)


def test_uniqueness_note_when_not_guaranteed():
    rep = fixed_point_solve(golden_problem(n=16))
    assert "uniqueness not guaranteed" in rep.notes
    assert rep.to_dict()["uniqueness"]["note"] == "uniqueness not guaranteed"


def test_small_data_fixed_point_converges_from_random_starts():
    pr = golden_problem(n=32, kappa=4.0, D=4.0, delta=4.0)
    assert uniqueness_constant(pr).satisfied
    ms = multi_start(pr, seeds=(3, 4))
    assert ms["agree"]
    rep = ms["reports"][0]
    assert rep.converged and coupled_residual(pr, rep.phi, rep.c) < 1e-8
    assert rep.c.min() >= 0 and rep.c.max() <= 1.5 + 1e-12


def test_positivity_floor_respected_when_constraint_holds():
    # strong diffusion makes C1 small; the solution must then stay above eps_pos (no warning)
    pr = golden_problem(n=16, kappa=50.0)
    assert positivity_constraint_check(pr).satisfied
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        rep = fixed_point_solve(pr)
    assert rep.phi.min() >= pr.eps_pos
