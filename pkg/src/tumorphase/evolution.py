"""Backward-Euler solver for the coupled cell/nutrient system on [0, 1].

Semi-discrete form on the nodes (lumped mass W, P1 stiffness K):

    W phi_t + kappa K Phi(phi) = W (Gamma(x, phi, c) + F_phi) + G_phi
    W c_t   + D K c + E (c - c_b) = W (Q(x, phi, c) + F_c) + G_c

E carries the vessel-wall exchange rate eta at vascular nodes; far nodes are
Dirichlet. F and G are optional volume and boundary forcings (used by
manufactured-solution tests). Each step alternates a Newton solve for phi and one
for c until the Picard change drops below ``tol``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla

from .analysis import NormSuite
from .constitutive import ConstitutivePair
from .errors import NewtonDivergence, NonfiniteField, SolveError
from .geometry import Grid1D, InterfaceTrajectory, Vascular, mask_at
from .kinetics import KineticsSpec, gamma_eval, q_absorption_eval

log = logging.getLogger(__name__)

JAC_FLOOR = 1e-12
DT_MIN = 1e-12


@dataclass
class EvolutionProblem:
    grid: Grid1D
    pair: ConstitutivePair
    spec: KineticsSpec
    traj: InterfaceTrajectory
    kappa: float
    D: float
    phi0: np.ndarray
    c0: np.ndarray
    t_max: float
    dt: float
    tol: float = 1e-10
    newton_tol: float = 1e-12
    max_picard: int = 50
    max_newton: int = 60
    snapshot_every: int = 1
    phi_source: Optional[Callable] = None
    c_source: Optional[Callable] = None
    phi_flux: Optional[Callable] = None
    c_flux: Optional[Callable] = None
    dirichlet: dict = field(default_factory=dict)
    freeze_phi: bool = False

    def __post_init__(self):
        g = self.grid
        self.phi0 = np.asarray(self.phi0, dtype=float).copy()
        self.c0 = np.asarray(self.c0, dtype=float).copy()
        if self.phi0.shape != (g.n_nodes,) or self.c0.shape != (g.n_nodes,):
            raise ValueError("initial fields do not match the grid")
        for name, v in (("kappa", self.kappa), ("D", self.D), ("t_max", self.t_max), ("dt", self.dt)):
            if not v > 0:
                raise ValueError(f"{name} must be positive, got {v}")

    @property
    def eta_vector(self) -> np.ndarray:
        e = np.zeros(self.grid.n_nodes)
        for k, role in ((0, self.grid.left), (self.grid.n_cells, self.grid.right)):
            if isinstance(role, Vascular):
                e[k] = role.eta
        return e

    def dirichlet_values(self, t):
        """(phi, c) nodal targets at the Dirichlet nodes."""
        g = self.grid
        phi_d = np.full(g.n_nodes, g.phi_star if g.phi_star is not None else 0.0)
        c_d = np.full(g.n_nodes, g.c_b)
        if "phi" in self.dirichlet:
            phi_d = np.asarray(self.dirichlet["phi"](t), dtype=float)
        if "c" in self.dirichlet:
            c_d = np.asarray(self.dirichlet["c"](t), dtype=float)
        return phi_d, c_d


def h8_check(problem: EvolutionProblem, tol: float = 0.0):
    """Raise ValueError unless the initial data lie in [0, phi_max] x [0, c_b]."""
    p, c = problem.phi0, problem.c0
    pm, cb = problem.spec.phi_max, problem.grid.c_b
    if p.min() < -tol or p.max() > pm + tol:
        raise ValueError(f"initial phi outside [0, {pm}]")
    if c.min() < -tol or c.max() > cb + tol:
        raise ValueError(f"initial c outside [0, {cb}]")


@dataclass
class StepInfo:
    picard: int
    newton_phi: int
    newton_c: int
    residual: float


@dataclass
class AuditRecord:
    t: float
    dt: float
    phi_min: float
    phi_max: float
    c_min: float
    c_max: float
    picard: int
    newton_phi: int
    newton_c: int
    residual: float

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class Trajectory:
    times: list
    phi: list
    c: list
    audit: list
    grid: Grid1D

    @property
    def final(self):
        return self.phi[-1], self.c[-1]

    def audit_extremes(self) -> dict:
        if not self.audit:
            return {}
        return {
            "phi_min": min(a.phi_min for a in self.audit),
            "phi_max": max(a.phi_max for a in self.audit),
            "c_min": min(a.c_min for a in self.audit),
            "c_max": max(a.c_max for a in self.audit),
            "steps": len(self.audit),
        }


# --- nonlinear sub-solves -----------------------------------------------------------

def _tridiag_solve(lower, diag, upper, rhs):
    n = diag.size
    ab = np.zeros((3, n))
    ab[0, 1:] = upper
    ab[1] = diag
    ab[2, :-1] = lower
    return sla.solve_banded((1, 1), ab, rhs, check_finite=False)


class _Stepper:
    """Assembles the residuals of one time step and solves them."""

    def __init__(self, problem: EvolutionProblem):
        self.p = problem
        g = problem.grid
        self.w = g.mass()
        self.h = g.h
        self.eta = problem.eta_vector
        self.c_b = g.c_b
        self.dir = np.array(g.dirichlet_nodes, dtype=int)
        self.upper = problem.pair.domain_upper
        self.scale = self.w.copy()
        self.scale[self.dir] = 1.0

    def _blend(self, fn, wt, phi, c):
        spec = self.p.spec
        if not np.any(wt):
            return fn(spec, "H", phi, c)
        if np.all(wt == 1.0):
            return fn(spec, "T", phi, c)
        return wt * fn(spec, "T", phi, c) + (1.0 - wt) * fn(spec, "H", phi, c)

    def _central(self, fn, wt, phi, c, wrt_phi):
        """Central difference of the blended rate in one argument."""
        x = phi if wrt_phi else c
        eps = 1e-7 * np.maximum(1.0, np.abs(x))
        if wrt_phi:
            v1, v0 = self._blend(fn, wt, x + eps, c), self._blend(fn, wt, x - eps, c)
        else:
            v1, v0 = self._blend(fn, wt, phi, x + eps), self._blend(fn, wt, phi, x - eps)
        return (v1 - v0) / (2 * eps)

    def _K(self, u):
        return self.p.grid.stiffness_apply(u)

    def _phi_residual(self, x, phi_old, c, wt, dt, extra, phi_d):
        p = self.p
        gam = self._blend(gamma_eval, wt, x, c)
        r = self.w * (x - phi_old) + p.kappa * dt * self._K(p.pair.phi(x)) - dt * self.w * gam - dt * extra
        r[self.dir] = x[self.dir] - phi_d[self.dir]
        return r

    def _solve_phi(self, phi, phi_old, c, wt, dt, extra, phi_d):
        p = self.p
        pair = p.pair
        kdt = p.kappa * dt
        w = self.w
        ih = 1.0 / self.h

        def residual(x):
            return self._phi_residual(x, phi_old, c, wt, dt, extra, phi_d)

        x = phi.copy()
        x[self.dir] = phi_d[self.dir]
        r = residual(x)
        scale = w.copy()
        scale[self.dir] = 1.0
        for it in range(1, p.max_newton + 1):
            dP = np.maximum(pair.phi_prime(x), JAC_FLOOR)
            dG = self._central(gamma_eval, wt, x, c, True)
            diag = w * (1.0 - dt * dG)
            diag[1:-1] += 2 * kdt * ih * dP[1:-1]
            diag[0] += kdt * ih * dP[0]
            diag[-1] += kdt * ih * dP[-1]
            upper = -kdt * ih * dP[1:]
            lower = -kdt * ih * dP[:-1]
            for k in self.dir:
                diag[k] = 1.0
                if k < x.size - 1:
                    upper[k] = 0.0
                if k > 0:
                    lower[k - 1] = 0.0
            step = _tridiag_solve(lower, diag, upper, -r)
            if not np.all(np.isfinite(step)):
                raise NewtonDivergence("non-finite Newton update for phi")
            norm0 = np.max(np.abs(r / scale))
            lam = 1.0
            while True:
                trial = x + lam * step
                ok = self.upper is None or np.all(trial < self.upper)
                if ok:
                    r_new = residual(trial)
                    if np.all(np.isfinite(r_new)) and np.max(np.abs(r_new / scale)) <= (1 - 1e-4 * lam) * norm0:
                        break
                lam *= 0.5
                if lam < 1e-10:
                    if ok and np.max(np.abs(step)) <= 1e-13 * (1 + np.max(np.abs(x))):
                        return x, it, norm0
                    raise NewtonDivergence("line search failed for phi")
            x, r = trial, r_new
            res = np.max(np.abs(r / scale))
            if res <= p.newton_tol or np.max(np.abs(lam * step)) <= 1e-14 * (1 + np.max(np.abs(x))):
                return x, it, res
        raise NewtonDivergence(f"phi Newton did not converge in {p.max_newton} iterations")

    def _solve_c(self, c, c_old, phi, wt, dt, extra, c_d):
        p = self.p
        w = self.w
        ddt = p.D * dt
        ih = 1.0 / self.h

        def residual(x):
            qv = self._blend(q_absorption_eval, wt, phi, x)
            r = (w * (x - c_old) + ddt * self._K(x) + dt * self.eta * (x - self.c_b)
                 - dt * w * qv - dt * extra)
            r[self.dir] = x[self.dir] - c_d[self.dir]
            return r

        x = c.copy()
        x[self.dir] = c_d[self.dir]
        r = residual(x)
        scale = w.copy()
        scale[self.dir] = 1.0
        upper = np.full(x.size - 1, -ddt * ih)
        lower = upper.copy()
        for k in self.dir:
            if k < x.size - 1:
                upper[k] = 0.0
            if k > 0:
                lower[k - 1] = 0.0
        base = w + dt * self.eta
        base[1:-1] += 2 * ddt * ih
        base[0] += ddt * ih
        base[-1] += ddt * ih
        for it in range(1, p.max_newton + 1):
            dQ = self._central(q_absorption_eval, wt, phi, x, False)
            diag = base - dt * w * dQ
            diag[self.dir] = 1.0
            step = _tridiag_solve(lower, diag, upper, -r)
            if not np.all(np.isfinite(step)):
                raise NewtonDivergence("non-finite Newton update for c")
            norm0 = np.max(np.abs(r / scale))
            lam = 1.0
            while True:
                trial = x + lam * step
                r_new = residual(trial)
                if np.max(np.abs(r_new / scale)) <= (1 - 1e-4 * lam) * norm0:
                    break
                lam *= 0.5
                if lam < 1e-10:
                    if np.max(np.abs(step)) <= 1e-13 * (1 + np.max(np.abs(x))):
                        return x, it, norm0
                    raise NewtonDivergence("line search failed for c")
            x, r = trial, r_new
            res = np.max(np.abs(r / scale))
            if res <= p.newton_tol or np.max(np.abs(lam * step)) <= 1e-14 * (1 + np.max(np.abs(x))):
                return x, it, res
        raise NewtonDivergence(f"c Newton did not converge in {p.max_newton} iterations")

    def step(self, phi_n, c_n, t, dt):
        p = self.p
        t1 = t + dt
        wt = mask_at(p.traj, p.grid, t1).nodal_tumor
        zero = np.zeros_like(phi_n)
        f_phi = self.w * p.phi_source(t1) if p.phi_source else zero
        if p.phi_flux:
            f_phi = f_phi + p.phi_flux(t1)
        f_c = self.w * p.c_source(t1) if p.c_source else zero
        if p.c_flux:
            f_c = f_c + p.c_flux(t1)
        phi_d, c_d = p.dirichlet_values(t1)
        phi, c = phi_n.copy(), c_n.copy()
        n_phi = n_c = 0
        res = 0.0
        for sweep in range(1, p.max_picard + 1):
            if p.freeze_phi:
                phi_new = phi
            else:
                phi_new, k1, r1 = self._solve_phi(phi, phi_n, c, wt, dt, f_phi, phi_d)
                n_phi += k1
            c_new, k2, r2 = self._solve_c(c, c_n, phi_new, wt, dt, f_c, c_d)
            n_c += k2
            phi, c = phi_new, c_new
            # c solves its equation exactly at the new phi, so the coupled residual is the phi one
            if p.freeze_phi:
                res = r2
            else:
                rphi = self._phi_residual(phi, phi_n, c, wt, dt, f_phi, phi_d)
                res = float(np.max(np.abs(rphi / self.scale)))
            if res <= p.tol:
                break
        else:
            raise NewtonDivergence(f"Picard coupling did not converge in {p.max_picard} sweeps (residual {res:.3g})")
        if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(c))):
            raise NonfiniteField("non-finite field after step")
        return phi, c, StepInfo(sweep, n_phi, n_c, res)


def step(problem: EvolutionProblem, phi_n, c_n, t: float, dt: float):
    """One backward-Euler step. Returns ``(phi, c)``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    phi_n = np.asarray(phi_n, dtype=float)
    c_n = np.asarray(c_n, dtype=float)
    if not (np.all(np.isfinite(phi_n)) and np.all(np.isfinite(c_n))):
        raise NonfiniteField("non-finite input field")
    phi, c, _ = _Stepper(problem).step(phi_n, c_n, t, dt)
    return phi, c


def _audit(t, dt, phi, c, info: StepInfo) -> AuditRecord:
    return AuditRecord(float(t), float(dt), float(phi.min()), float(phi.max()),
                       float(c.min()), float(c.max()), info.picard, info.newton_phi,
                       info.newton_c, float(info.residual))


def run(problem: EvolutionProblem, callback: Optional[Callable] = None) -> Trajectory:
    """Integrate from 0 to ``t_max``; halve dt on Newton failure and grow it back after successes."""
    stepper = _Stepper(problem)
    phi, c = problem.phi0.copy(), problem.c0.copy()
    t = 0.0
    times, phis, cs, audit = [0.0], [phi.copy()], [c.copy()], []
    dt_target = problem.dt
    dt = dt_target
    n_steps = 0
    eps_t = 1e-12 * max(1.0, problem.t_max)
    while t < problem.t_max - eps_t:
        h = min(dt, problem.t_max - t)
        try:
            phi_new, c_new, info = stepper.step(phi, c, t, h)
        except NewtonDivergence as exc:
            dt = 0.5 * h
            log.debug("step rejected at t=%g (dt=%g): %s", t, h, exc)
            if dt < DT_MIN:
                raise SolveError(f"time step underflow at t={t:g}: {exc}") from exc
            continue
        t += h
        if problem.t_max - t <= eps_t:
            t = problem.t_max
        phi, c = phi_new, c_new
        n_steps += 1
        rec = _audit(t, h, phi, c, info)
        audit.append(rec)
        if callback is not None:
            callback(rec, phi, c)
        if n_steps % problem.snapshot_every == 0 or t >= problem.t_max:
            times.append(t)
            phis.append(phi.copy())
            cs.append(c.copy())
        if dt < dt_target:
            dt = min(2 * dt, dt_target)
    return Trajectory(times, phis, cs, audit, problem.grid)


# --- continuous dependence ---------------------------------------------------------

def bump(x, centre=0.3, width=0.1):
    """Smooth compactly supported bump with peak 1."""
    z = (np.asarray(x, dtype=float) - centre) / width
    out = np.zeros_like(z)
    inside = np.abs(z) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - z[inside] ** 2))
    return out


@dataclass
class DependenceReport:
    eps: float
    lhs: float
    rhs: float
    ratio: Optional[float]
    terms: dict
    t_max: float

    def to_dict(self):
        return {"eps": self.eps, "lhs": self.lhs, "rhs": self.rhs, "ratio": self.ratio,
                "terms": self.terms, "t_max": self.t_max}


def _perturbed(problem: EvolutionProblem, eps: float) -> EvolutionProblem:
    g = problem.grid
    psi = bump(g.nodes)
    psi[g.dirichlet_nodes] = 0.0
    phi0 = np.clip(problem.phi0 + eps * psi, 0.0, problem.spec.phi_max)
    c0 = np.clip(problem.c0 + eps * psi, 0.0, g.c_b)
    return replace(problem, phi0=phi0, c0=c0, snapshot_every=1)


def continuous_dependence_experiment(problem: EvolutionProblem, eps: float) -> DependenceReport:
    """Run unperturbed and perturbed trajectories and evaluate both sides of the stability estimate.

    LHS = int ||dphi||_~^2 dt + int sum w (dPhi)(dphi) dt + int ||dc||_1^2 dt + int |dc|_trace^2 dt
    RHS = ||dphi_0||_0^2 + ||dc_0||_0^2
    A zero perturbation yields ``ratio = None`` (0/0).
    """
    base = replace(problem, snapshot_every=1)
    pert = _perturbed(problem, eps)
    norms = NormSuite(problem.grid)
    a = run(base)
    b = run(pert)
    if len(a.times) != len(b.times) or not np.allclose(a.times, b.times, rtol=0, atol=1e-12):
        raise SolveError("perturbed and unperturbed runs used different time grids")
    dts = np.diff(a.times)
    pair = problem.pair
    weak = mono = h1 = trace = 0.0
    for k, dt in enumerate(dts, start=1):
        dphi = b.phi[k] - a.phi[k]
        dc = b.c[k] - a.c[k]
        weak += dt * norms.poisson.weak_inner(dphi, dphi)
        mono += dt * float(np.sum(norms.w * (pair.phi(b.phi[k]) - pair.phi(a.phi[k])) * dphi))
        h1 += dt * norms.h1(dc) ** 2
        trace += dt * norms.trace(dc) ** 2
    rhs = norms.l2_sq(pert.phi0 - base.phi0) + norms.l2_sq(pert.c0 - base.c0)
    lhs = weak + mono + h1 + trace
    ratio = None if rhs == 0.0 else lhs / rhs
    terms = {"weak_phi": weak, "monotone": mono, "c_l2h1": h1, "c_trace": trace}
    return DependenceReport(float(eps), float(lhs), float(rhs), ratio, terms, problem.t_max)
