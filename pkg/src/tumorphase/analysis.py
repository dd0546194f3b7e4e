"""Discrete norms, convergence-order regression and manufactured-solution sources."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .errors import InsufficientData, RangeError
from .geometry import Grid1D
from .kinetics import gamma_eval, q_absorption_eval


class NormSuite:
    """Norms on nodal fields of ``grid`` using the lumped mass and P1 stiffness."""

    def __init__(self, grid: Grid1D, poisson=None):
        self.grid = grid
        self.w = grid.mass()
        self._poisson = poisson

    @property
    def poisson(self):
        if self._poisson is None:
            from .poisson import poisson_operator

            self._poisson = poisson_operator(self.grid)
        return self._poisson

    def l2_sq(self, u) -> float:
        u = np.asarray(u, dtype=float)
        return float(u @ (self.w * u))

    def l2(self, u) -> float:
        return float(np.sqrt(self.l2_sq(u)))

    def grad_sq(self, u) -> float:
        u = np.asarray(u, dtype=float)
        return float(np.sum(np.diff(u) ** 2) / self.grid.h)

    def h1(self, u) -> float:
        return float(np.sqrt(self.l2_sq(u) + self.grad_sq(u)))

    def trace(self, u) -> float:
        """|u| at the vascular end(s); Euclidean over both ends when there are two."""
        nodes = self.grid.vascular_nodes
        u = np.asarray(u, dtype=float)
        return float(np.sqrt(np.sum(u[nodes] ** 2))) if nodes else 0.0

    def weak(self, u) -> float:
        return self.poisson.weak_norm(u)

    def l2h1(self, series: Sequence, dts: Sequence) -> float:
        """Time-integrated H1 norm (rectangle rule on the supplied step sizes)."""
        return float(np.sqrt(sum(dt * self.h1(u) ** 2 for u, dt in zip(series, dts))))


def convergence_order(errors: Sequence) -> tuple:
    """Least-squares slope of log e against log h. Returns ``(order, r_squared)``."""
    if len(errors) < 3:
        raise InsufficientData(f"need at least 3 (h, e) samples, got {len(errors)}")
    h = np.array([float(a) for a, _ in errors])
    e = np.array([float(b) for _, b in errors])
    if np.any(np.diff(h) >= 0):
        raise InsufficientData("h must be strictly decreasing")
    if np.any(e <= 0) or not np.all(np.isfinite(e)):
        raise InsufficientData("errors must be positive and finite")
    x, y = np.log(h), np.log(e)
    slope, icpt = np.polyfit(x, y, 1)
    ss_res = float(np.sum((y - (slope * x + icpt)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return float(slope), float(r2)


# --- manufactured solutions ------------------------------------------------------

_DT = 1e-3
_DX = 2e-3


def _fd_weights(offsets, order):
    """Finite-difference weights on integer ``offsets`` for the derivative of given order."""
    offsets = np.asarray(offsets, dtype=float)
    m = offsets.size
    A = np.vander(offsets, m, increasing=True).T
    b = np.zeros(m)
    b[order] = math.factorial(order)
    return np.linalg.solve(A, b)


_CENTRAL = np.arange(-2, 3)
_FORWARD = np.arange(0, 6)


def _d_dt(f, t, x):
    k = _DT
    w = _fd_weights(_CENTRAL, 1)
    return sum(wi * f(t + o * k, x) for wi, o in zip(w, _CENTRAL)) / k


def _dx(f, t, x, order):
    """Fourth-order x-derivative that samples ``f`` only inside [0, 1]."""
    x = np.asarray(x, dtype=float)
    k = _DX
    out = np.empty_like(x)
    left = x < 2 * k
    right = x > 1 - 2 * k
    mid = ~(left | right)
    for mask, offs in ((mid, _CENTRAL), (left, _FORWARD), (right, -_FORWARD)):
        if mask.any():
            w = _fd_weights(offs, order)
            xs = x[mask]
            out[mask] = sum(wi * f(t, xs + o * k) for wi, o in zip(w, offs)) / k ** order
    return out


def _d_dx(f, t, x):
    return _dx(f, t, x, 1)


def _d_dxx(f, t, x):
    return _dx(f, t, x, 2)


@dataclass
class ManufacturedSources:
    """Nodal forcing for the manufactured solution, evaluated on demand at time ``t``."""

    grid: Grid1D
    pair: object
    spec: object
    traj: object
    kappa: float
    D: float
    phi_ex: Callable
    c_ex: Callable
    derivatives: Mapping

    def _get(self, name, fallback, t, x):
        d = self.derivatives.get(name)
        return np.asarray(d(t, x), dtype=float) * np.ones_like(x) if d is not None else fallback(t, x)

    def _Phi_ex(self, t, x):
        return self.pair.phi(self.phi_ex(t, x))

    def _mix(self, fn, t, phi, c):
        from .geometry import mask_at

        wt = mask_at(self.traj, self.grid, t).nodal_tumor
        return wt * fn(self.spec, "T", phi, c) + (1 - wt) * fn(self.spec, "H", phi, c)

    def phi_source(self, t):
        x = self.grid.nodes
        phi = self.phi_ex(t, x)
        c = self.c_ex(t, x)
        phi_t = self._get("phi_t", lambda s, y: _d_dt(self.phi_ex, s, y), t, x)
        lap = self._get("Phi_xx", lambda s, y: _d_dxx(self._Phi_ex, s, y), t, x)
        return phi_t - self.kappa * lap - self._mix(gamma_eval, t, phi, c)

    def c_source(self, t):
        x = self.grid.nodes
        phi = self.phi_ex(t, x)
        c = self.c_ex(t, x)
        c_t = self._get("c_t", lambda s, y: _d_dt(self.c_ex, s, y), t, x)
        lap = self._get("c_xx", lambda s, y: _d_dxx(self.c_ex, s, y), t, x)
        return c_t - self.D * lap - self._mix(q_absorption_eval, t, phi, c)

    def _normal(self, node):
        return -1.0 if node == 0 else 1.0

    def phi_boundary(self, t):
        """kappa dPhi/dn at vascular nodes (nodal vector, zero elsewhere)."""
        out = np.zeros(self.grid.n_nodes)
        for k in self.grid.vascular_nodes:
            x = np.array([self.grid.nodes[k]])
            dx = self._get("Phi_x", lambda s, y: _d_dx(self._Phi_ex, s, y), t, x)
            out[k] = self.kappa * self._normal(k) * dx[0]
        return out

    def c_boundary(self, t):
        """D dc/dn + eta (c - c_b) at vascular nodes."""
        out = np.zeros(self.grid.n_nodes)
        for k in self.grid.vascular_nodes:
            role = self.grid.left if k == 0 else self.grid.right
            x = np.array([self.grid.nodes[k]])
            dx = self._get("c_x", lambda s, y: _d_dx(self.c_ex, s, y), t, x)
            cv = float(self.c_ex(t, x)[0])
            out[k] = self.D * self._normal(k) * dx[0] + role.eta * (cv - role.c_b)
        return out


def check_exact_range(phi_ex, c_ex, grid, t_max, phi_max, c_b, samples=41, tol=1e-12):
    x = grid.nodes
    for t in np.linspace(0.0, t_max, samples):
        p = np.asarray(phi_ex(t, x), dtype=float)
        c = np.asarray(c_ex(t, x), dtype=float)
        if p.min() < -tol or p.max() > phi_max + tol:
            raise RangeError(f"exact phi leaves [0, {phi_max}] at t={t:g}: [{p.min():.6g}, {p.max():.6g}]")
        if c.min() < -tol or c.max() > c_b + tol:
            raise RangeError(f"exact c leaves [0, {c_b}] at t={t:g}: [{c.min():.6g}, {c.max():.6g}]")


def mms_residual(pair, spec, phi_ex: Callable, c_ex: Callable, *, grid: Grid1D, traj,
                 kappa: float, D: float, t_max: float, dt: float,
                 derivatives: Optional[Mapping] = None, **problem_kw):
    """Evolution problem whose exact solution is ``(phi_ex, c_ex)``.

    ``phi_ex`` and ``c_ex`` are vectorised maps ``(t, x) -> value``. Missing
    entries of ``derivatives`` (keys phi_t, Phi_xx, Phi_x, c_t, c_xx, c_x) are
    approximated by fourth-order finite differences.
    """
    from .evolution import EvolutionProblem

    check_exact_range(phi_ex, c_ex, grid, t_max, spec.phi_max, grid.c_b)
    src = ManufacturedSources(grid, pair, spec, traj, kappa, D, phi_ex, c_ex, dict(derivatives or {}))
    x = grid.nodes
    dirichlet = {}
    if grid.dirichlet_nodes:
        dirichlet = {"phi": lambda t: phi_ex(t, x), "c": lambda t: c_ex(t, x)}
    return EvolutionProblem(
        grid=grid, pair=pair, spec=spec, traj=traj, kappa=kappa, D=D,
        phi0=np.asarray(phi_ex(0.0, x), dtype=float), c0=np.asarray(c_ex(0.0, x), dtype=float),
        t_max=t_max, dt=dt,
        phi_source=src.phi_source, c_source=src.c_source,
        phi_flux=src.phi_boundary, c_flux=src.c_boundary,
        dirichlet=dirichlet, **problem_kw,
    )
