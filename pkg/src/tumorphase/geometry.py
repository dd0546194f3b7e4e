"""Uniform grid on [0, 1], boundary roles, and the tumor/host interface."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class Vascular:
    """Blood-vessel boundary: zero cell flux, Robin exchange of nutrient with the vessel."""

    eta: float
    c_b: float

    def __post_init__(self):
        if not self.eta > 0:
            raise ConfigError(f"vascular boundary needs eta > 0, got {self.eta}")
        if not self.c_b > 0:
            raise ConfigError(f"vascular boundary needs c_b > 0, got {self.c_b}")


@dataclass(frozen=True)
class Far:
    """Far-field boundary: Dirichlet data phi = phi_star, c = c_b."""

    phi_star: float
    c_b: float

    def __post_init__(self):
        if not self.phi_star > 0:
            raise ConfigError(f"far boundary needs phi_star > 0, got {self.phi_star}")
        if not self.c_b > 0:
            raise ConfigError(f"far boundary needs c_b > 0, got {self.c_b}")


Role = Union[Vascular, Far]


@dataclass(frozen=True)
class Grid1D:
    n_cells: int
    left: Role
    right: Role

    @property
    def h_exact(self) -> Fraction:
        return Fraction(1, self.n_cells)

    @property
    def h(self) -> float:
        return 1.0 / self.n_cells

    @property
    def n_nodes(self) -> int:
        return self.n_cells + 1

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n_cells + 1) / self.n_cells

    @property
    def faces(self) -> np.ndarray:
        return self.nodes

    @property
    def no_far_flag(self) -> bool:
        return isinstance(self.left, Vascular) and isinstance(self.right, Vascular)

    @property
    def roles(self):
        return (self.left, self.right)

    @property
    def dirichlet_nodes(self) -> list:
        out = []
        if isinstance(self.left, Far):
            out.append(0)
        if isinstance(self.right, Far):
            out.append(self.n_cells)
        return out

    @property
    def vascular_nodes(self) -> list:
        out = []
        if isinstance(self.left, Vascular):
            out.append(0)
        if isinstance(self.right, Vascular):
            out.append(self.n_cells)
        return out

    @property
    def free_mask(self) -> np.ndarray:
        m = np.ones(self.n_nodes, dtype=bool)
        m[self.dirichlet_nodes] = False
        return m

    @property
    def c_b(self) -> float:
        return max(r.c_b for r in self.roles)

    @property
    def phi_star(self) -> Optional[float]:
        stars = [r.phi_star for r in self.roles if isinstance(r, Far)]
        return stars[0] if stars else None

    def mass(self) -> np.ndarray:
        """Trapezoidal (lumped) nodal weights."""
        w = np.full(self.n_nodes, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return w

    def stiffness_banded(self) -> np.ndarray:
        """Upper banded form (2, n_nodes) of the linear finite-element stiffness matrix."""
        n, h = self.n_nodes, self.h
        ab = np.zeros((2, n))
        ab[0, 1:] = -1.0 / h
        ab[1, :] = 2.0 / h
        ab[1, 0] = ab[1, -1] = 1.0 / h
        return ab

    def stiffness_apply(self, u: np.ndarray) -> np.ndarray:
        """K u without forming K. Works on the trailing axis."""
        u = np.asarray(u, dtype=float)
        d = np.diff(u, axis=-1) / self.h
        out = np.zeros_like(u)
        out[..., :-1] -= d
        out[..., 1:] += d
        return out

    def stiffness_sparse(self):
        import scipy.sparse as sp

        n, h = self.n_nodes, self.h
        main = np.full(n, 2.0 / h)
        main[0] = main[-1] = 1.0 / h
        off = np.full(n - 1, -1.0 / h)
        return sp.diags([off, main, off], [-1, 0, 1], format="csc")


def build_grid(n_cells: int, boundary_roles: Sequence[Role] = None) -> Grid1D:
    if boundary_roles is None:
        boundary_roles = (Vascular(1.0, 1.0), Far(0.5, 1.0))
    if int(n_cells) != n_cells or n_cells < 4:
        raise ConfigError(f"n_cells must be an integer >= 4, got {n_cells}")
    left, right = boundary_roles
    for r in (left, right):
        if not isinstance(r, (Vascular, Far)):
            raise ConfigError(f"unknown boundary role {r!r}")
    cbs = {r.c_b for r in (left, right)}
    if len(cbs) > 1:
        raise ConfigError(f"both boundary roles must share c_b, got {sorted(cbs)}")
    stars = {r.phi_star for r in (left, right) if isinstance(r, Far)}
    if len(stars) > 1:
        raise ConfigError(f"both far boundaries must share phi_star, got {sorted(stars)}")
    return Grid1D(int(n_cells), left, right)


@dataclass(frozen=True)
class InterfaceTrajectory:
    """Prescribed interface position S(t).

    ``kind`` is "constant", "table" (piecewise linear in t, held constant outside
    the table) or "static" (S fixed at its initial value). ``start`` optionally
    gives a left interface so the tumor occupies (start(t), S(t)); it is used when
    both ends are vascular.
    """

    kind: str
    times: tuple = (0.0,)
    values: tuple = (0.0,)
    start: Optional["InterfaceTrajectory"] = None

    def __post_init__(self):
        if self.kind not in ("constant", "table", "static"):
            raise ConfigError(f"unknown trajectory kind {self.kind!r}")
        if len(self.times) != len(self.values) or not self.values:
            raise ConfigError("trajectory times and values must have equal nonzero length")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ConfigError("trajectory times must be strictly increasing")
        if any(not 0.0 <= v <= 1.0 for v in self.values):
            raise ConfigError("interface positions must lie in [0, 1]")

    @classmethod
    def constant(cls, s: float, start: Optional[float] = None):
        return cls("constant", (0.0,), (float(s),), None if start is None else cls.constant(start))

    @classmethod
    def static(cls, s: float, start: Optional[float] = None):
        return cls("static", (0.0,), (float(s),), None if start is None else cls.static(start))

    @classmethod
    def table(cls, pairs, start=None):
        t, s = zip(*[(float(a), float(b)) for a, b in pairs])
        return cls("table", tuple(t), tuple(s), start)

    def s_of_t(self, t: float) -> float:
        if self.kind in ("constant", "static") or len(self.times) == 1:
            return self.values[0]
        return float(np.interp(t, self.times, self.values))

    def interval(self, t: float):
        lo = 0.0 if self.start is None else self.start.s_of_t(t)
        hi = self.s_of_t(t)
        if lo > hi:
            raise ConfigError(f"tumor interval is empty at t={t}: start {lo} > end {hi}")
        return lo, hi


@dataclass(frozen=True)
class SubdomainMask:
    """Tumor weights per cell and per node (dual control volume); host weight is the complement."""

    tumor: np.ndarray
    nodal_tumor: np.ndarray

    @property
    def host(self) -> np.ndarray:
        return 1.0 - self.tumor

    @property
    def nodal_host(self) -> np.ndarray:
        return 1.0 - self.nodal_tumor


def _overlap(a, b, lo, hi):
    return np.clip(np.minimum(b, hi) - np.maximum(a, lo), 0.0, None)


def mask_at(traj: InterfaceTrajectory, grid: Grid1D, t: float = 0.0) -> SubdomainMask:
    lo, hi = traj.interval(t)
    x = grid.nodes
    h = grid.h
    cell = np.clip(_overlap(x[:-1], x[1:], lo, hi) / h, 0.0, 1.0)
    a = np.maximum(x - 0.5 * h, 0.0)
    b = np.minimum(x + 0.5 * h, 1.0)
    node = np.clip(_overlap(a, b, lo, hi) / (b - a), 0.0, 1.0)
    return SubdomainMask(cell, node)
