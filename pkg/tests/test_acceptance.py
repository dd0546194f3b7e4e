"""Acceptance criteria 1-10, each at its stated tolerance and time budget."""

import math
import time

import numpy as np
import pytest

from tumorphase import constitutive as cst
from tumorphase import kinetics as kin
from tumorphase.analysis import NormSuite, convergence_order, mms_residual
from tumorphase.config import random_smooth
from tumorphase.evolution import EvolutionProblem, continuous_dependence_experiment, h8_check, run
from tumorphase.geometry import Far, InterfaceTrajectory, Vascular, build_grid
from tumorphase.poisson import poincare_constant, poisson_operator
from tumorphase.stationary import (StationaryProblem, fixed_point_solve, multi_start,
                                   positivity_constraint_check, solve_c_given_phi, solve_phi_given_c,
                                   uniqueness_constant)

from conftest import ALL_LAWS, golden_problem, record_acceptance, zero_pop

MIXED = (Vascular(1.0, 1.0), Far(0.5, 1.0))
LINEAR_PAIR = cst.build_pair(cst.PowerAdhesive(1.0, 0.5))


class Clock:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


def test_01_poisson_oracle():
    worst_p = worst_w = 0.0
    with Clock() as clk:
        for n in (16, 64, 256):
            g = build_grid(n, MIXED)
            op = poisson_operator(g)
            h2 = g.h ** 2
            one = np.ones(g.n_nodes)
            err = np.abs(op.apply(one) - (1 - g.nodes ** 2) / 2).max()
            werr = abs(op.weak_norm(one) ** 2 - 1 / 3)
            worst_p = max(worst_p, err / (2 * h2))
            worst_w = max(worst_w, werr / (5 * h2))
    ok = worst_p <= 1 and worst_w <= 1 and clk.elapsed < 1.0
    record_acceptance(1, "Poisson oracle", ok,
                      f"max err/(2h^2)={worst_p:.3g}, max weak err/(5h^2)={worst_w:.3g}, {clk.elapsed:.2f}s")
    assert ok


def test_02_poincare_constant():
    with Clock() as clk:
        vals = [poincare_constant(build_grid(n, MIXED)) for n in (16, 64, 256, 1024)]
    rel = abs(vals[-1] / (2 / math.pi) - 1)
    diffs = np.diff(vals)
    monotone = bool(np.all(diffs < 0) or np.all(diffs > 0))
    ok = rel < 0.02 and monotone and clk.elapsed < 5.0
    record_acceptance(2, "Poincare constant", ok,
                      f"C_P(1024)={vals[-1]:.8f}, rel dev {rel:.2e}, monotone={monotone}, {clk.elapsed:.2f}s")
    assert ok


def _bounds_run(seed):
    law = ALL_LAWS[seed % 4]
    pair = cst.build_pair(law)
    pm = 0.9 if law.domain_upper is None else 0.95
    spec = kin.build_kinetics(kin.CorrectedThreshold(2.0, 3.0, 0.5), delta=0.1, phi_max=pm, c_b=1.0)
    g = build_grid(128, MIXED)
    rng = np.random.default_rng(1000 + seed)
    cap = pm if law.domain_upper is None else min(pm, 0.95 * law.domain_upper)
    p0 = random_smooth(g.nodes, rng, 0.0, cap)
    c0 = random_smooth(g.nodes, rng, 0.0, 1.0)
    p0[-1], c0[-1] = 0.5, 1.0
    pr = EvolutionProblem(g, pair, spec, InterfaceTrajectory.constant(0.5), 1e-2, 1.0, p0, c0,
                          t_max=1.0, dt=1e-3, snapshot_every=1000)
    h8_check(pr)
    tr = run(pr)
    return pm, tr.audit


@pytest.mark.slow
def test_03_bound_preservation():
    bad = []
    steps = []
    worst = {"phi_min": math.inf, "phi_over": -math.inf, "c_min": math.inf, "c_over": -math.inf}
    with Clock() as clk:
        for seed in range(20):
            pm, audit = _bounds_run(seed)
            steps.append(len(audit))
            for a in audit:
                worst["phi_min"] = min(worst["phi_min"], a.phi_min)
                worst["phi_over"] = max(worst["phi_over"], a.phi_max - pm)
                worst["c_min"] = min(worst["c_min"], a.c_min)
                worst["c_over"] = max(worst["c_over"], a.c_max - 1.0)
                if a.phi_min < -1e-9 or a.phi_max > pm + 1e-9 or a.c_min < -1e-9 or a.c_max > 1.0 + 1e-9:
                    bad.append((seed, a.t))
    ok = not bad and min(steps) >= 1000 and clk.elapsed < 120.0
    record_acceptance(3, "bound preservation", ok,
                      f"20 runs, {min(steps)}-{max(steps)} steps, min phi {worst['phi_min']:.3g}, "
                      f"phi-phi_max {worst['phi_over']:.3g}, min c {worst['c_min']:.3g}, "
                      f"c-c_b {worst['c_over']:.3g}, {clk.elapsed:.1f}s")
    assert ok, bad[:5]


def test_04_continuous_dependence():
    pair = cst.build_pair(cst.PowerAdhesive(2.0, 0.5))
    spec = kin.build_kinetics(kin.CorrectedThreshold(2.0, 3.0, 0.5), delta=0.1, phi_max=0.9, c_b=1.0)
    g = build_grid(64, MIXED)
    rng = np.random.default_rng(4)
    p0 = random_smooth(g.nodes, rng, 0.1, 0.8)
    c0 = random_smooth(g.nodes, rng, 0.2, 0.9)
    p0[-1], c0[-1] = 0.5, 1.0
    pr = EvolutionProblem(g, pair, spec, InterfaceTrajectory.constant(0.5), 1e-2, 1.0, p0, c0,
                          t_max=0.1, dt=1e-3, snapshot_every=100)
    with Clock() as clk:
        ratios = [continuous_dependence_experiment(pr, e).ratio for e in (1e-1, 1e-2, 1e-3, 1e-4)]
    spread = max(ratios) / min(ratios)
    ok = all(r is not None and r > 0 for r in ratios) and spread < 10 and clk.elapsed < 120.0
    record_acceptance(4, "continuous dependence", ok,
                      f"ratios {', '.join(f'{r:.4g}' for r in ratios)}, spread x{spread:.3g}, {clk.elapsed:.1f}s")
    assert ok


def test_05_stationary_trivial():
    spec = kin.make_spec(zero_pop(), zero_pop(), 0.0, 1.0, 1.0)
    with Clock() as clk:
        pr = StationaryProblem(build_grid(64, MIXED), cst.build_pair(cst.PowerAdhesive(2.0, 0.5)), spec, 1.0, 1.0)
        rep = fixed_point_solve(pr, constants=False)
    dev = max(np.abs(rep.phi - 0.5).max(), np.abs(rep.c - 1.0).max())
    ok = dev <= 1e-12 and rep.iterations <= 2 and clk.elapsed < 1.0
    record_acceptance(5, "stationary trivial case", ok,
                      f"deviation {dev:.2g}, {rep.iterations} iteration(s), {clk.elapsed:.2f}s")
    assert ok


def test_06_stationary_linear_oracles():
    D, eta, lam, phibar, cb = 1.0, 2.0, 3.0, 0.4, 1.0
    kappa, delta = 1.0, 2.0
    ratios_c, ratios_phi = [], []
    with Clock() as clk:
        for n in (32, 128, 512):
            g = build_grid(n, (Vascular(eta, cb), Far(0.5, cb)))
            x = g.nodes
            spec = kin.make_spec(zero_pop(lam=lam), zero_pop(lam=lam), 0.0, 1.0, cb)
            c = solve_c_given_phi(StationaryProblem(g, LINEAR_PAIR, spec, 1.0, D), np.full(n + 1, phibar))
            mu = math.sqrt(lam * phibar / D)
            k = eta / (D * mu)
            A = cb * (1 + k * math.sinh(mu)) / (math.cosh(mu) + k * math.sinh(mu))
            B = eta * (A - cb) / (D * mu)
            ratios_c.append(np.abs(c - (A * np.cosh(mu * x) + B * np.sinh(mu * x))).max() * n ** 2)
            spec = kin.make_spec(zero_pop(), zero_pop(), delta, 1.0, cb)
            phi = solve_phi_given_c(StationaryProblem(g, LINEAR_PAIR, spec, kappa, D), np.full(n + 1, cb),
                                    check_positivity=False)
            nu = math.sqrt(delta / kappa)
            ratios_phi.append(np.abs(phi - 0.5 * np.cosh(nu * x) / math.cosh(nu)).max() * n ** 2)
    ok = max(ratios_c) <= 5 and max(ratios_phi) <= 5 and clk.elapsed < 5.0
    record_acceptance(6, "stationary linear oracles", ok,
                      f"max err/h^2: S1 {max(ratios_c):.3g}, S2 {max(ratios_phi):.3g}, {clk.elapsed:.2f}s")
    assert ok


def test_07_fixed_point_uniqueness():
    pair = cst.build_pair(cst.PowerAdhesive(2.0, 0.5))
    pm, cb = 0.9, 1.0
    f_p = kin.f_factor("phi_logistic", pm, pair)
    f_d = kin.f_factor("phi", pm, pair)

    def pop(gp, gd, lam):
        return dict(gamma_p=gp, gamma_d=gd, lam=lam, f_p=f_p, f_d=f_d, g_p=kin.g_factor("linear"),
                    g_d=kin.g_factor("deficit", 0.5), h=f_d, q=kin.g_factor("monod", k=1.0))

    spec = kin.make_spec(pop(0.2, -0.1, 0.3), pop(0.1, -0.05, 0.2), 1.0, pm, cb)
    pr = StationaryProblem(build_grid(64, (Vascular(1.0, cb), Far(0.5, cb))), pair, spec, 1.0, 1.0, 0.4)
    with Clock() as clk:
        uq = uniqueness_constant(pr)
        ms = multi_start(pr, seeds=(11, 22, 33), atol=1e-8)
    iters = [r.iterations for r in ms["reports"]]
    conv = all(r.converged for r in ms["reports"])
    ok = uq.satisfied and conv and ms["agree"] and max(iters) <= 100 and clk.elapsed < 30.0
    record_acceptance(7, "fixed-point uniqueness", ok,
                      f"C={uq.C:.4g} < {uq.threshold:.4g}, iterations {iters}, spread {ms['spread']:.2g}, "
                      f"{clk.elapsed:.2f}s")
    assert ok


def test_08_constant_formulas():
    n = 64
    cp = 1.0 / (2 * n * math.sin(math.pi / (4 * n)))
    # hand computation, linear law and linear factors (see golden_problem):
    # branch 1 = sum |gamma| Lip_Phi(f) sup g + lam Lip_Phi(h) sup q = 1.2 + 0.55
    # branch 2 = sum |gamma| sup f Lip(g)^2 + lam sup q = 0.78 + 0.42
    # branch 3 = C_P^2 sum |gamma| (sup f + sup g) = 1.36 C_P^2
    golden_C = 0.5 * max(1.75, 1.2, 1.36 * cp ** 2)
    # positivity: |Omega_T| = S = 0.4, delta phi_max = 0.45
    golden_C1 = (1 + cp ** 2) / 1.0 * (0.216 + 0.0945 + 0.45)
    pr = golden_problem(n=n)
    C = uniqueness_constant(pr).C
    C1 = positivity_constraint_check(pr).C1
    rel = max(abs(C / golden_C - 1), abs(C1 / golden_C1 - 1))
    ok = rel <= 1e-10
    record_acceptance(8, "constant formulas", ok, f"C={C:.12g}, C1={C1:.12g}, max rel err {rel:.2g}")
    assert ok


def _mms_orders(pair, phex, cex):
    spec = kin.build_kinetics(kin.CorrectedThreshold(1.0, 1.0, 0.5), delta=0.1)
    errs = []
    for n in (32, 64, 128, 256):
        g = build_grid(n, MIXED)
        pr = mms_residual(pair, spec, phex, cex, grid=g, traj=InterfaceTrajectory.constant(0.5),
                          kappa=1.0, D=1.0, t_max=0.5, dt=0.05)
        tr = run(pr)
        ns = NormSuite(g)
        errs.append((1 / n, ns.l2(tr.phi[-1] - phex(0.5, g.nodes)), ns.l2(tr.c[-1] - cex(0.5, g.nodes))))
    return (convergence_order([(h, e) for h, e, _ in errs])[0],
            convergence_order([(h, e) for h, _, e in errs])[0])


def test_09_mms_convergence():
    pair = cst.build_pair(cst.PowerAdhesive(2.0, 0.5))
    # linear in t, so backward Euler adds no time error and the spatial error is isolated
    cex = lambda t, x: 1.0 - 0.2 * np.cos(np.pi * x / 2) * (1 - t / 2) + 0 * x
    smooth = lambda t, x: 0.5 + 0.2 * np.cos(np.pi * x / 2) * (1 - t / 2) + 0 * x
    degenerate = lambda t, x: x * (0.5 + 0.2 * (1 - x) * t)
    with Clock() as clk:
        p_phi, p_c = _mms_orders(pair, smooth, cex)
        d_phi, _ = _mms_orders(pair, degenerate, cex)
    ok = p_c >= 1.9 and p_phi >= 1.5 and d_phi >= 0.8 and clk.elapsed < 300.0
    record_acceptance(9, "MMS convergence", ok,
                      f"non-degenerate phi {p_phi:.4f}, c {p_c:.4f}; degenerate phi {d_phi:.4f}, {clk.elapsed:.1f}s")
    assert ok


def test_10_no_far_regime():
    pair = cst.build_pair(cst.PowerAdhesive(2.0, 0.5))
    lam = kin.f_factor("linear", 1.0)
    spec = kin.make_spec(zero_pop(lam=1.0, h=lam), zero_pop(lam=0.5, h=lam), 0.0, 1.0, 1.0)
    g = build_grid(64, (Vascular(1.0, 1.0), Vascular(2.0, 1.0)))
    x = g.nodes
    p0 = 0.3 + 0.2 * np.cos(3 * x) ** 2
    c0 = 0.5 + 0.3 * x
    with Clock() as clk:
        pr = EvolutionProblem(g, pair, spec, InterfaceTrajectory.constant(0.6, start=0.2), 1e-1, 1.0,
                              p0, c0, t_max=0.2, dt=1e-2, snapshot_every=1)
        tr = run(pr)
        w = g.mass()
        mass = np.array([w @ p for p in tr.phi])
        drift = float(np.max(np.abs(np.diff(mass)) / np.abs(mass[:-1])))
        op = poisson_operator(g)
        E = np.eye(g.n_nodes)
        G = np.array([[op.weak_inner(E[i], E[j]) for j in range(g.n_nodes)] for i in range(g.n_nodes)])
        asym = float(np.abs(G - G.T).max() / np.abs(G).max())
        lam_min = float(np.linalg.eigvalsh(0.5 * (G + G.T)).min())
    ok = op.variant == "NeumannAverage" and drift <= 1e-10 and asym <= 1e-12 and lam_min > 0 and clk.elapsed < 30.0
    record_acceptance(10, "no-far-boundary regime", ok,
                      f"mass drift/step {drift:.2g}, weak-inner asymmetry {asym:.2g}, min eig {lam_min:.3g}, "
                      f"{clk.elapsed:.2f}s")
    assert ok
