"""Discrete Poisson solution operator and the weak (dual) inner product it induces.

Two variants share the P1 stiffness K and the lumped mass W of a grid:

* ``MixedBC``: zero flux at vascular ends, zero Dirichlet at far ends,
  Pf = K_free^{-1} W f on the free nodes.
* ``NeumannAverage``: zero flux at both ends; -u'' = f - <f> with <u> = <f>,
  solved as a bordered (Lagrange multiplier) system.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import RegimeError, SolveError
from .geometry import Grid1D, build_grid

MIXED = "MixedBC"
NEUMANN = "NeumannAverage"


@dataclass
class PoissonOperator:
    grid: Grid1D
    variant: str
    _factor: object = None

    def __post_init__(self):
        g = self.grid
        self.w = g.mass()
        self.length = float(self.w.sum())
        if self.variant == MIXED:
            free = g.free_mask
            if free.all():
                raise RegimeError("MixedBC needs at least one far (Dirichlet) end")
            self.free = free
            ab = g.stiffness_banded()[:, free]
            ab[0, 0] = 0.0  # coupling to a removed neighbour
            try:
                self._factor = sla.cholesky_banded(ab)
            except np.linalg.LinAlgError as exc:
                raise SolveError(f"stiffness factorization failed: {exc}") from exc
        elif self.variant == NEUMANN:
            n = g.n_nodes
            K = g.stiffness_sparse()
            col = sp.csc_matrix(self.w.reshape(-1, 1))
            B = sp.bmat([[K, col], [col.T, None]], format="csc")
            try:
                self._factor = spla.splu(B)
            except RuntimeError as exc:
                raise SolveError(f"bordered factorization failed: {exc}") from exc
            self._n = n
        else:
            raise ValueError(f"unknown Poisson variant {self.variant!r}")

    def apply(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape[0] != self.grid.n_nodes:
            raise ValueError("field does not match the grid")
        if not np.all(np.isfinite(f)):
            raise SolveError("non-finite input to the Poisson operator")
        wf = self.w.reshape((-1,) + (1,) * (f.ndim - 1)) * f
        if self.variant == MIXED:
            u = np.zeros_like(f)
            u[self.free] = sla.cho_solve_banded((self._factor, False), wf[self.free])
            return u
        rhs = np.concatenate([wf, np.tensordot(self.w, f, axes=(0, 0))[None, ...]], axis=0)
        sol = self._factor.solve(rhs)
        return sol[: self._n]

    __call__ = apply

    def weak_inner(self, f, g) -> float:
        return weak_inner(self, f, g)

    def weak_norm(self, f) -> float:
        return float(np.sqrt(max(weak_inner(self, f, f), 0.0)))


def poisson_operator(grid: Grid1D) -> PoissonOperator:
    """Pick the variant from the boundary roles of ``grid``."""
    return PoissonOperator(grid, NEUMANN if grid.no_far_flag else MIXED)


def apply(op: PoissonOperator, f) -> np.ndarray:
    return op.apply(f)


def weak_inner(op: PoissonOperator, f, g) -> float:
    """(Pf, g) with trapezoidal quadrature; for the Neumann variant, the gradient form."""
    pf = op.apply(f)
    if op.variant == MIXED:
        return float(pf @ (op.w * np.asarray(g, dtype=float)))
    pg = op.apply(g)
    grad = float(pf @ op.grid.stiffness_apply(pg))
    return grad + float(op.w @ pf) * float(op.w @ pg) / op.length


def weak_norm(op: PoissonOperator, f) -> float:
    return op.weak_norm(f)


def poincare_constant(grid: Grid1D, boundary_roles=None, tol: float = 1e-13, max_iter: int = 10000) -> float:
    """Best discrete constant in ||u||_0 <= C_P ||u'||_0 for u vanishing at far ends.

    Computed as sqrt of the largest eigenvalue of P (self-adjoint in the lumped
    mass inner product) by power iteration.
    """
    if boundary_roles is not None:
        grid = build_grid(grid.n_cells, boundary_roles)
    if grid.no_far_flag:
        raise RegimeError("Poincare constant undefined without a far boundary")
    op = PoissonOperator(grid, MIXED)
    w = op.w
    rng = np.random.default_rng(0)
    v = np.where(op.free, 1.0 + 0.01 * rng.random(grid.n_nodes), 0.0)
    v /= np.sqrt(v @ (w * v))
    lam = 0.0
    for _ in range(max_iter):
        u = op.apply(v)
        new = float(u @ (w * v))
        u /= np.sqrt(u @ (w * u))
        if abs(new - lam) <= tol * abs(new):
            lam = new
            break
        lam, v = new, u
    else:
        raise SolveError("power iteration did not converge")
    return float(np.sqrt(lam))
