"""Cumulative integrals of vectorised scalar maps on a fixed panel table."""

from __future__ import annotations

import numpy as np

from .errors import RangeError

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


def gauss_legendre(f, a, b):
    """Integrate ``f`` over ``[a, b]`` (arrays broadcast) with one 8-point panel."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    pts = mid[..., None] + half[..., None] * _GL_X
    vals = f(pts)
    return half * (vals @ _GL_W)


class CumulativeIntegral:
    """F(x) = integral of ``f`` from ``origin`` to ``x``.

    Panel sums are computed once at construction; a query adds one Gauss-Legendre
    panel from the nearest node on its left. Breakpoints of ``f`` (kinks, jumps)
    must be included in ``nodes`` so that no panel straddles them.
    """

    def __init__(self, f, nodes, origin=0.0):
        nodes = np.unique(np.append(np.asarray(nodes, dtype=float), origin))
        if nodes.size < 2:
            raise ValueError("need at least two nodes")
        self.f = f
        self.nodes = nodes
        panels = gauss_legendre(f, nodes[:-1], nodes[1:])
        cum = np.concatenate([[0.0], np.cumsum(panels)])
        k0 = int(np.searchsorted(nodes, origin))
        self.values = cum - cum[k0]
        self.lo = nodes[0]
        self.hi = nodes[-1]

    def __call__(self, x, extrapolate=False):
        x = np.asarray(x, dtype=float)
        if not extrapolate and (np.any(x < self.lo) or np.any(x > self.hi)):
            raise RangeError(f"argument outside tabulated interval [{self.lo}, {self.hi}]")
        k = np.clip(np.searchsorted(self.nodes, x, side="right") - 1, 0, self.nodes.size - 1)
        base = self.nodes[k]
        return self.values[k] + gauss_legendre(self.f, base, x)
