"""Stationary problem on [0, 1] (vascular end at 0, far end at 1) by operator splitting.

S1 maps a cell field phi to the nutrient field c solving

    D K c + E (c - c_b) + W sum_a theta_a lam_a h_a(phi) q~_a(c) = 0,   c = c_b at far nodes,

S2 maps c to phi through u = Phi(phi):

    kappa K u = W [sum_a theta_a sum_nu gamma_a^nu f~_a^nu(Phi^-1(u)) g_a^nu(c) - delta Phi^-1(u)],
    u = Phi(phi_star) at far nodes.

Both are solved by Newton with a line search on the associated energy functional,
and the stationary state is a fixed point of S2 o S1.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla

from ._quadrature import CumulativeIntegral
from .constitutive import ConstitutivePair, phi_lipschitz_constant
from .errors import NotFactoredError, PositivityWarning, RangeError, RegimeError, SolveError
from .geometry import Grid1D, InterfaceTrajectory, Vascular, mask_at
from .kinetics import POPULATIONS, KineticsSpec
from .poisson import poincare_constant

JAC_FLOOR = 1e-12


@dataclass
class StationaryProblem:
    grid: Grid1D
    pair: ConstitutivePair
    spec: KineticsSpec
    kappa: float
    D: float
    S: float = 0.5
    eps_pos: Optional[float] = None
    tol: float = 1e-10
    k_max: int = 500
    omega: float = 1.0
    newton_max: int = 100

    def __post_init__(self):
        g = self.grid
        if g.no_far_flag or g.phi_star is None:
            raise RegimeError("the stationary problem needs a far (Dirichlet) end")
        if not 0.0 <= self.S <= 1.0:
            raise ValueError(f"S must lie in [0, 1], got {self.S}")
        if not (self.kappa > 0 and self.D > 0):
            raise ValueError("kappa and D must be positive")
        if not 0 < self.omega <= 1:
            raise ValueError("omega must lie in (0, 1]")
        if self.eps_pos is None:
            self.eps_pos = 0.5 * self.phi_star
        if not 0 < self.eps_pos < self.phi_star:
            raise ValueError(f"eps_pos must lie in (0, phi_star), got {self.eps_pos}")
        if not self.spec.factored:
            raise NotFactoredError("the splitting solver needs factored kinetics")
        for a in POPULATIONS:
            h0 = float(self.spec.raw_population(a).h(0.0))
            if h0 != 0.0:
                raise ValueError(f"h_{a}(0) must vanish, got {h0}")

    @property
    def phi_star(self) -> float:
        return self.grid.phi_star

    @property
    def c_b(self) -> float:
        return self.grid.c_b

    @property
    def theta(self) -> np.ndarray:
        """Nodal tumor weight."""
        return mask_at(InterfaceTrajectory.constant(self.S), self.grid).nodal_tumor


class _Layout:
    def __init__(self, problem: StationaryProblem):
        g = problem.grid
        self.g = g
        self.w = g.mass()
        self.free = g.free_mask
        self.fi = np.flatnonzero(self.free)
        self.eta = np.zeros(g.n_nodes)
        for k, role in ((0, g.left), (g.n_cells, g.right)):
            if isinstance(role, Vascular):
                self.eta[k] = role.eta
        self.wf = self.w[self.free]

    def K_banded(self, coef: float, extra_diag=None) -> np.ndarray:
        """(3, m) banded coef*K restricted to free nodes, plus an optional diagonal."""
        ab = self.g.stiffness_banded()[:, self.free] * coef
        m = ab.shape[1]
        full = np.zeros((3, m))
        full[1] = ab[1]
        full[0, 1:] = ab[0, 1:]
        full[2, :-1] = ab[0, 1:]
        # removed neighbours break the chain
        if not self.free[0]:
            full[0, 0] = 0.0
        if extra_diag is not None:
            full[1] += extra_diag
        return full

    def K_apply(self, u: np.ndarray) -> np.ndarray:
        return self.g.stiffness_apply(u)


def _solve_banded(ab, rhs):
    return sla.solve_banded((1, 1), ab, rhs, check_finite=False)


# --- S1 ---------------------------------------------------------------------------

def _truncated_q(q):
    def qt(c):
        c = np.asarray(c, dtype=float)
        return np.where(c >= 0, q(np.maximum(c, 0.0)), 0.0)

    return qt


@dataclass
class SolveLog:
    iterations: int
    residual: float
    energy: list = field(default_factory=list)


class _NutrientSolver:
    def __init__(self, problem: StationaryProblem):
        self.p = problem
        self.L = _Layout(problem)
        cb = problem.c_b
        self.q = {a: _truncated_q(problem.spec.raw_population(a).q) for a in POPULATIONS}
        nodes = np.linspace(0.0, 4.0 * cb, 801)
        self.Q = {a: CumulativeIntegral(self.q[a], nodes) for a in POPULATIONS}
        self.theta = problem.theta

    def absorption_weights(self, phi):
        spec = self.p.spec
        th = self.theta
        out = {}
        for a, wt in (("T", th), ("H", 1.0 - th)):
            raw = spec.raw_population(a)
            out[a] = wt * raw.lam * raw.h(np.clip(phi, 0.0, spec.phi_max))
        return out

    def _Qt(self, a, c):
        c = np.asarray(c, dtype=float)
        return np.where(c > 0, self.Q[a](np.maximum(c, 0.0), extrapolate=True), 0.0)

    def energy(self, c, coef):
        p, L = self.p, self.L
        J = 0.5 * p.D * float(c @ L.K_apply(c)) + 0.5 * float(np.sum(L.eta * (c - p.c_b) ** 2))
        for a in POPULATIONS:
            J += float(np.sum(L.w * coef[a] * self._Qt(a, c)))
        return J

    def residual(self, c, coef):
        p, L = self.p, self.L
        r = p.D * L.K_apply(c) + L.eta * (c - p.c_b)
        for a in POPULATIONS:
            r = r + L.w * coef[a] * self.q[a](c)
        return r

    def solve(self, phi, c0=None):
        p, L = self.p, self.L
        coef = self.absorption_weights(np.asarray(phi, dtype=float))
        c = np.full(L.g.n_nodes, p.c_b) if c0 is None else np.array(c0, dtype=float)
        c[~L.free] = p.c_b
        J = self.energy(c, coef)
        log = SolveLog(0, math.inf, [J])
        for it in range(1, p.newton_max + 1):
            r = self.residual(c, coef)[L.free]
            res = float(np.max(np.abs(r / L.wf)))
            log.residual = res
            eps = 1e-7 * np.maximum(1.0, np.abs(c))
            dq = sum(coef[a] * (self.q[a](c + eps) - self.q[a](c - eps)) / (2 * eps) for a in POPULATIONS)
            diag = (L.eta + L.w * dq)[L.free]
            d = _solve_banded(L.K_banded(p.D, diag), -r)
            slope = float(r @ d)
            alpha = 1.0
            while True:
                trial = c.copy()
                trial[L.free] += alpha * d
                Jt = self.energy(trial, coef)
                if Jt <= J + 1e-4 * alpha * slope + 1e-15 * abs(J):
                    break
                alpha *= 0.5
                if alpha < 1e-12:
                    break
            step = alpha * float(np.max(np.abs(d)))
            if alpha < 1e-12:
                if res <= 1e-8:
                    log.iterations = it
                    return c, log
                raise SolveError(f"nutrient line search failed (residual {res:.3g})")
            c, J = trial, Jt
            log.energy.append(J)
            if step <= 1e-13 * (1.0 + float(np.max(np.abs(c)))):
                log.iterations = it
                log.residual = float(np.max(np.abs(self.residual(c, coef)[L.free] / L.wf)))
                return c, log
        raise SolveError(f"nutrient Newton did not converge in {p.newton_max} iterations")


def solve_c_given_phi(problem: StationaryProblem, phi, c0=None, return_log=False):
    """The operator S1."""
    phi = np.asarray(phi, dtype=float)
    pm = problem.spec.phi_max
    if phi.min() < -1e-12 or phi.max() > pm + 1e-12:
        raise RangeError(f"phi must lie in [0, {pm}]")
    c, log = _NutrientSolver(problem).solve(phi, c0)
    return (c, log) if return_log else c


# --- S2 ---------------------------------------------------------------------------

class _CellSolver:
    def __init__(self, problem: StationaryProblem):
        self.p = problem
        self.L = _Layout(problem)
        spec, pair = problem.spec, problem.pair
        pm = spec.phi_max
        self.theta = problem.theta
        self.f = {}
        for a in POPULATIONS:
            pop = spec.population(a)
            fp, fd = pop.f_p, pop.f_d
            self.f[a, "p"] = lambda s, fp=fp: np.where((s >= 0) & (s <= pm), fp(s), 0.0)
            self.f[a, "d"] = lambda s, fd=fd: np.where(s >= 0, fd(s), 0.0)
        upper = pair.domain_upper
        lo = -pm
        pieces = [np.linspace(lo, 0.0, 201), np.linspace(0.0, pm, 1001)]
        if upper is None:
            hi = 2.0 * pm
            pieces.append(np.linspace(pm, hi, 401))
        else:
            hi = upper * (1 - 1e-9)
            if hi > pm:
                pieces.append(upper - (upper - pm) * np.geomspace(1.0, (upper - hi) / (upper - pm), 801))
            else:
                hi = min(pm, hi)
                pieces[1] = np.concatenate([np.linspace(0.0, 0.9 * hi, 901),
                                            upper - 0.1 * hi * np.geomspace(1.0, (upper - hi) / (0.1 * hi), 801)])
        kinks = [k for k in pair.law.kinks if lo < k < hi] if hasattr(pair.law, "kinks") else []
        nodes = np.unique(np.concatenate(pieces + [np.array(kinks)]))
        nodes = nodes[nodes <= hi]
        self.lo, self.hi = lo, hi
        dP = pair.phi_prime
        self.F = {key: CumulativeIntegral(lambda s, f=f: f(s) * dP(s), nodes) for key, f in self.f.items()}
        self.Psi = CumulativeIntegral(lambda s: s * dP(s), nodes)

    def coefficients(self, c):
        spec = self.p.spec
        th = self.theta
        coef = {}
        for a, wt in (("T", th), ("H", 1.0 - th)):
            pop = spec.population(a)
            coef[a, "p"] = wt * pop.gamma_p * pop.g_p(c)
            coef[a, "d"] = wt * pop.gamma_d * pop.g_d(c)
        return coef

    def growth(self, phi, coef):
        out = -self.p.spec.delta * phi
        for key, f in self.f.items():
            out = out + coef[key] * f(phi)
        return out

    def energy(self, u, phi, coef):
        if phi.min() < self.lo or phi.max() > self.hi:
            return math.inf
        L = self.L
        J = 0.5 * self.p.kappa * float(u @ L.K_apply(u))
        dens = self.p.spec.delta * self.Psi(phi)
        for key, F in self.F.items():
            dens = dens - coef[key] * F(phi)
        return J + float(np.sum(L.w * dens))

    def residual(self, u, phi, coef):
        return self.p.kappa * self.L.K_apply(u) - self.L.w * self.growth(phi, coef)

    def solve(self, c, phi0=None):
        p, L, pair = self.p, self.L, self.p.pair
        coef = self.coefficients(np.asarray(c, dtype=float))
        u_star = float(pair.phi(p.phi_star))
        phi = np.full(L.g.n_nodes, p.phi_star) if phi0 is None else np.array(phi0, dtype=float)
        phi[~L.free] = p.phi_star
        u = pair.phi(phi)
        u[~L.free] = u_star
        J = self.energy(u, phi, coef)
        log = SolveLog(0, math.inf, [J])
        kK = L.K_banded(p.kappa)
        for it in range(1, p.newton_max + 1):
            r = self.residual(u, phi, coef)[L.free]
            res = float(np.max(np.abs(r / L.wf)))
            log.residual = res
            eps = 1e-7 * np.maximum(1.0, np.abs(phi))
            dG = (self.growth(phi + eps, coef) - self.growth(phi - eps, coef)) / (2 * eps)
            dP = np.maximum(pair.phi_prime(phi), JAC_FLOOR)
            diag = -(L.w * dG / dP)[L.free]
            d = _solve_banded(L.K_banded(p.kappa, diag), -r)
            slope = float(r @ d)
            if not np.all(np.isfinite(d)) or slope >= 0:
                d = _solve_banded(kK, -r)
                slope = float(r @ d)
            alpha = 1.0
            while True:
                ut = u.copy()
                ut[L.free] += alpha * d
                if pair.in_range(ut).all():
                    pt = pair.inverse(ut)
                    Jt = self.energy(ut, pt, coef)
                    if Jt <= J + 1e-4 * alpha * slope + 1e-15 * abs(J):
                        break
                alpha *= 0.5
                if alpha < 1e-12:
                    break
            if alpha < 1e-12:
                if res <= 1e-8:
                    log.iterations = it
                    return phi, log
                raise SolveError(f"cell Newton line search failed (residual {res:.3g})")
            step = alpha * float(np.max(np.abs(d)))
            u, phi, J = ut, pt, Jt
            phi[~L.free] = p.phi_star
            log.energy.append(J)
            if step <= 1e-13 * (1.0 + float(np.max(np.abs(u)))):
                log.iterations = it
                log.residual = float(np.max(np.abs(self.residual(u, phi, coef)[L.free] / L.wf)))
                return phi, log
        raise SolveError(f"cell Newton did not converge in {p.newton_max} iterations")


def solve_phi_given_c(problem: StationaryProblem, c, phi0=None, return_log=False, check_positivity=True):
    """The operator S2."""
    c = np.asarray(c, dtype=float)
    if c.min() < -1e-12 or c.max() > problem.c_b + 1e-12:
        raise RangeError(f"c must lie in [0, {problem.c_b}]")
    phi, log = _CellSolver(problem).solve(c, phi0)
    if check_positivity:
        _warn_positivity(problem, phi)
    return (phi, log) if return_log else phi


def _warn_positivity(problem, phi):
    if phi.min() < problem.eps_pos:
        try:
            ok = positivity_constraint_check(problem, problem.eps_pos).satisfied
        except NotFactoredError:
            ok = False
        if ok:
            warnings.warn(
                f"min phi = {phi.min():.6g} below the positivity floor {problem.eps_pos:g} "
                "although the constraint holds", PositivityWarning, stacklevel=3)


# --- constants ----------------------------------------------------------------------

def _sup(fn, lo, hi, n=4001):
    s = np.linspace(lo, hi, n)
    return float(np.max(np.abs(np.asarray(fn(s), dtype=float) * np.ones_like(s))))


def _lip(fn, lo, hi, n=4001):
    s = np.linspace(lo, hi, n)
    v = np.asarray(fn(s), dtype=float) * np.ones_like(s)
    return float(np.max(np.abs(np.diff(v)) / np.diff(s)))


@dataclass
class UniquenessCheck:
    C: float
    threshold: float
    satisfied: bool
    branches: tuple
    C_P: float
    absolute_rates: bool = True

    def to_dict(self):
        return {"C": self.C, "threshold": self.threshold, "satisfied": self.satisfied,
                "branches": list(self.branches), "C_P": self.C_P,
                "absolute_rates": self.absolute_rates,
                "note": None if self.satisfied else "uniqueness not guaranteed"}


@dataclass
class PositivityCheck:
    C1: float
    bound: float
    satisfied: bool
    C_P: float

    def to_dict(self):
        return {"C1": self.C1, "bound": self.bound, "satisfied": self.satisfied, "C_P": self.C_P}


def _phi_interval(problem):
    pm = problem.spec.phi_max
    up = problem.pair.domain_upper
    if up is not None and up <= pm:
        return (0.0, up * (1 - 1e-9))
    return (0.0, pm)


def uniqueness_constant(problem: StationaryProblem, resolution: int = 2001) -> UniquenessCheck:
    """Smallness constant for uniqueness of the stationary solution (death rates taken in absolute value)."""
    spec, pair = problem.spec, problem.pair
    if not spec.factored:
        raise NotFactoredError("uniqueness constant needs factored kinetics")
    cp = poincare_constant(problem.grid)
    interval = _phi_interval(problem)
    cb = problem.c_b
    b1 = b2 = b3 = 0.0
    for a in POPULATIONS:
        raw = spec.raw_population(a)
        for nu, gam, f, g in (("p", raw.gamma_p, raw.f_p, raw.g_p), ("d", raw.gamma_d, raw.f_d, raw.g_d)):
            gam = abs(gam)
            if gam == 0.0:
                continue
            lip_f = phi_lipschitz_constant(pair, f, interval, resolution, f"f_{a}^{nu}").constant
            sup_f = _sup(f, *interval)
            sup_g = _sup(g, 0.0, cb)
            lip_g = _lip(g, 0.0, cb)
            b1 += gam * lip_f * sup_g
            b2 += gam * sup_f * lip_g ** 2
            b3 += gam * (sup_f + sup_g)
        if raw.lam != 0.0:
            lip_h = phi_lipschitz_constant(pair, raw.h, interval, resolution, f"h_{a}").constant
            sup_q = _sup(raw.q, 0.0, cb)
            b1 += raw.lam * lip_h * sup_q
            b2 += raw.lam * sup_q
    b3 *= cp ** 2
    C = 0.5 * max(b1, b2, b3)
    threshold = min(problem.kappa, spec.delta, problem.D / cp ** 2)
    return UniquenessCheck(C, threshold, bool(C < threshold), (b1, b2, b3), cp)


def positivity_constraint_check(problem: StationaryProblem, eps_pos: Optional[float] = None) -> PositivityCheck:
    """Compare the a priori oscillation bound C1 of Phi(phi) with Phi(phi_star) - Phi(eps_pos)."""
    eps_pos = problem.eps_pos if eps_pos is None else eps_pos
    if not 0 < eps_pos < problem.phi_star:
        raise ValueError("eps_pos must lie in (0, phi_star)")
    spec, pair = problem.spec, problem.pair
    if not spec.factored:
        raise NotFactoredError("positivity constraint needs factored kinetics")
    cp = poincare_constant(problem.grid)
    interval = _phi_interval(problem)
    total = 0.0
    for a, size in (("T", problem.S), ("H", 1.0 - problem.S)):
        raw = spec.raw_population(a)
        for gam, f, g in ((raw.gamma_p, raw.f_p, raw.g_p), (raw.gamma_d, raw.f_d, raw.g_d)):
            if gam != 0.0:
                total += abs(gam) * _sup(f, *interval) * _sup(g, 0.0, problem.c_b) * size
    total += spec.delta * spec.phi_max
    C1 = (1 + cp ** 2) / problem.kappa * total
    bound = float(pair.phi(problem.phi_star) - pair.phi(eps_pos))
    return PositivityCheck(float(C1), bound, bool(C1 <= bound), cp)


# --- fixed point --------------------------------------------------------------------

@dataclass
class FixedPointReport:
    iterations: int
    history: list
    converged: bool
    phi: np.ndarray
    c: np.ndarray
    uniqueness: Optional[UniquenessCheck]
    positivity: Optional[PositivityCheck]
    coupled_residual: float
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "history": list(map(float, self.history)),
            "residual_tail": list(map(float, self.history[-5:])),
            "coupled_residual": self.coupled_residual,
            "uniqueness": None if self.uniqueness is None else self.uniqueness.to_dict(),
            "positivity": None if self.positivity is None else self.positivity.to_dict(),
            "notes": list(self.notes),
            "phi_min": float(self.phi.min()),
            "phi_max": float(self.phi.max()),
            "c_min": float(self.c.min()),
            "c_max": float(self.c.max()),
        }


def coupled_residual(problem: StationaryProblem, phi, c) -> float:
    """Max nodal residual (per unit mass) of both stationary equations at free nodes."""
    ns, cs = _NutrientSolver(problem), _CellSolver(problem)
    L = ns.L
    rc = ns.residual(c, ns.absorption_weights(phi))[L.free] / L.wf
    u = problem.pair.phi(phi)
    ru = cs.residual(u, phi, cs.coefficients(c))[L.free] / L.wf
    return float(max(np.max(np.abs(rc)), np.max(np.abs(ru))))


def fixed_point_solve(problem: StationaryProblem, phi_init=None, constants: bool = True) -> FixedPointReport:
    """Iterate phi <- (1 - omega) phi + omega S2(S1(phi)) until the L2 change drops below ``tol``."""
    L = _Layout(problem)
    ns, cs = _NutrientSolver(problem), _CellSolver(problem)
    n = problem.grid.n_nodes
    phi = np.full(n, problem.phi_star) if phi_init is None else np.array(phi_init, dtype=float)
    pm = problem.spec.phi_max
    if phi.min() < 0 or phi.max() > pm:
        raise RangeError(f"initial phi must lie in [0, {pm}]")
    history = []
    c = None
    converged = False
    k = 0
    for k in range(1, problem.k_max + 1):
        c, _ = ns.solve(phi, c)
        new, _ = cs.solve(np.clip(c, 0.0, problem.c_b), phi)
        new = (1 - problem.omega) * phi + problem.omega * new
        diff = new - phi
        change = float(np.sqrt(diff @ (L.w * diff)))
        history.append(change)
        phi = new
        if change < problem.tol:
            converged = True
            break
    c, _ = ns.solve(phi, c)
    notes = []
    uq = pos = None
    if constants:
        try:
            uq = uniqueness_constant(problem)
            if not uq.satisfied:
                notes.append("uniqueness not guaranteed")
        except Exception as exc:  # certificates may be unavailable for degenerate factors
            notes.append(f"uniqueness constant unavailable: {exc}")
        pos = positivity_constraint_check(problem)
    notes.append("death rates enter the constants in absolute value")
    if not converged:
        notes.append(f"no convergence after {problem.k_max} iterations")
    res = coupled_residual(problem, phi, c)
    if pos is not None and pos.satisfied and phi.min() < problem.eps_pos:
        warnings.warn(f"min phi = {phi.min():.6g} below the positivity floor {problem.eps_pos:g}",
                      PositivityWarning, stacklevel=2)
    return FixedPointReport(k, history, converged, phi, c, uq, pos, res, notes)


def multi_start(problem: StationaryProblem, seeds=(0, 1, 2), atol: float = 1e-8) -> dict:
    """Fixed-point runs from random starts in [0, phi_max]; reports whether the limits agree."""
    reports = []
    for s in seeds:
        rng = np.random.default_rng(s)
        phi0 = rng.uniform(0.0, problem.spec.phi_max, problem.grid.n_nodes)
        phi0[~problem.grid.free_mask] = problem.phi_star
        reports.append(fixed_point_solve(problem, phi0, constants=False))
    ref = reports[0]
    spread = max(max(float(np.max(np.abs(r.phi - ref.phi))), float(np.max(np.abs(r.c - ref.c))))
                 for r in reports)
    return {"reports": reports, "spread": spread, "agree": spread <= atol}
