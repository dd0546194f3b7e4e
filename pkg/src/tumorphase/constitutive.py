"""Cell stress laws and the constitutive function Phi.

Phi is defined through ``Phi'(s) = s * (s * Sigma(s))'`` with ``Phi(0) = 0``.
Closed forms are used where they exist; the asymptotic blow-up law is
integrated numerically once, at construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from ._quadrature import CumulativeIntegral
from .errors import ConstructionError, DegenerateError, DomainError, RangeError


def _pos(x):
    return np.maximum(x, 0.0)


@dataclass(frozen=True)
class PolynomialOvershoot:
    """Sigma(s) = a s + b [(s - phi_star)^+]^n, steep beyond close packing."""

    a: float
    b: float
    n: int
    phi_star: float

    def __post_init__(self):
        if not self.a > 0 or not self.b > 0:
            raise DomainError("PolynomialOvershoot needs a > 0 and b > 0")
        if int(self.n) != self.n or self.n < 1:
            raise DomainError("PolynomialOvershoot needs an integer n >= 1")
        if not 0 < self.phi_star < 1:
            raise DomainError("PolynomialOvershoot needs phi_star in (0, 1)")

    kinks = property(lambda self: (self.phi_star,) if self.n == 1 else ())
    domain_upper = None
    degenerate_at_zero = True

    def sigma(self, s):
        s = np.asarray(s, dtype=float)
        return self.a * s + self.b * _pos(s - self.phi_star) ** self.n

    def ssigma_prime(self, s):
        s = np.asarray(s, dtype=float)
        p = _pos(s - self.phi_star)
        above = s > self.phi_star
        pn1 = np.where(above, p ** (self.n - 1), 0.0)
        return 2 * self.a * s + self.b * p**self.n + self.b * self.n * s * pn1

    def phi_prime(self, s):
        s = np.asarray(s, dtype=float)
        return s * self.ssigma_prime(s)

    def phi(self, s):
        s = np.asarray(s, dtype=float)
        n = self.n
        p = _pos(s - self.phi_star)
        bracket = s**2 - s * p / (n + 1) + p**2 / ((n + 1) * (n + 2))
        return (2.0 / 3.0) * self.a * s**3 + self.b * p**n * bracket


@dataclass(frozen=True)
class SaturatingHump:
    """Sigma(s) = tau s / (1 + lam s^2); maximum tau / (2 sqrt(lam)) at s = 1/sqrt(lam)."""

    tau: float
    lam: float

    def __post_init__(self):
        if not self.tau > 0 or not self.lam > 0:
            raise DomainError("SaturatingHump needs tau > 0 and lam > 0")

    kinks = ()
    domain_upper = None
    degenerate_at_zero = True

    def sigma(self, s):
        s = np.asarray(s, dtype=float)
        return self.tau * s / (1 + self.lam * s**2)

    def ssigma_prime(self, s):
        s = np.asarray(s, dtype=float)
        return 2 * self.tau * s / (1 + self.lam * s**2) ** 2

    def phi_prime(self, s):
        s = np.asarray(s, dtype=float)
        return s * self.ssigma_prime(s)

    def phi(self, s):
        s = np.asarray(s, dtype=float)
        r = math.sqrt(self.lam)
        return (self.tau / self.lam) * (np.arctan(r * s) / r - s / (1 + self.lam * s**2))

    @property
    def phi_bound(self):
        """sup |Phi|; Phi saturates at +-tau*pi / (2 lam^(3/2))."""
        return self.tau * math.pi / (2 * self.lam**1.5)


@dataclass(frozen=True)
class PowerAdhesive:
    """Adhesive law with stress-free ratio phi_star; Phi(s) = |s|^(n-1) s (porous medium)."""

    n: float
    phi_star: float

    def __post_init__(self):
        if not self.n >= 1:
            raise DomainError("PowerAdhesive needs n >= 1")
        if not 0 < self.phi_star < 1:
            raise DomainError("PowerAdhesive needs phi_star in (0, 1)")

    kinks = ()
    domain_upper = None

    @property
    def degenerate_at_zero(self):
        return self.n > 1

    def sigma(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s == 0):
            raise DomainError("PowerAdhesive stress is singular at s = 0")
        if self.n == 1:
            return np.log(np.abs(s / self.phi_star)) / s
        n = self.n
        return n / (n - 1) * (np.abs(s) ** (n - 1) - self.phi_star ** (n - 1)) / s

    def ssigma_prime(self, s):
        s = np.asarray(s, dtype=float)
        if self.n == 1:
            return 1.0 / s
        return self.n * np.sign(s) * np.abs(s) ** (self.n - 2)

    def phi_prime(self, s):
        s = np.asarray(s, dtype=float)
        if self.n == 1:
            return np.ones_like(s)
        return self.n * np.abs(s) ** (self.n - 1)

    def phi(self, s):
        s = np.asarray(s, dtype=float)
        if self.n == 1:
            return s.copy()
        return np.abs(s) ** (self.n - 1) * s

    def phi_inverse(self, u):
        u = np.asarray(u, dtype=float)
        if self.n == 1:
            return u.copy()
        return np.sign(u) * np.abs(u) ** (1.0 / self.n)


@dataclass(frozen=True)
class AsymptoticBlowup:
    """Sigma(s) = p (phi_max - phi_star)(s - phi_star) / (|s| (phi_max - s)); infinite at phi_max."""

    p: float
    phi_star: float
    phi_max: float

    def __post_init__(self):
        if not self.p > 0:
            raise DomainError("AsymptoticBlowup needs p > 0")
        if not 0 < self.phi_star < 1:
            raise DomainError("AsymptoticBlowup needs phi_star in (0, 1)")
        if not 0 < self.phi_max <= 1 or not self.phi_star < self.phi_max:
            raise DomainError("AsymptoticBlowup needs phi_star < phi_max <= 1")

    kinks = ()
    degenerate_at_zero = True

    @property
    def domain_upper(self):
        return self.phi_max

    def _check(self, s):
        if np.any(s >= self.phi_max):
            raise DomainError(f"AsymptoticBlowup stress is infinite for s >= phi_max = {self.phi_max}")

    def sigma(self, s):
        s = np.asarray(s, dtype=float)
        self._check(s)
        if np.any(s == 0):
            raise DomainError("AsymptoticBlowup stress is singular at s = 0")
        a, ps = self.phi_max, self.phi_star
        return self.p * (a - ps) * (s - ps) / (np.abs(s) * (a - s))

    def ssigma_prime(self, s):
        s = np.asarray(s, dtype=float)
        a, ps = self.phi_max, self.phi_star
        with np.errstate(divide="ignore"):
            val = np.sign(s) * self.p * (a - ps) ** 2 / (a - s) ** 2
        return np.where(s < a, val, np.inf)

    def phi_prime(self, s):
        s = np.asarray(s, dtype=float)
        a, ps = self.phi_max, self.phi_star
        with np.errstate(divide="ignore", invalid="ignore"):
            val = np.abs(s) * self.p * (a - ps) ** 2 / (a - s) ** 2
        return np.where(s < a, val, np.inf)


StressLaw = Union[PolynomialOvershoot, SaturatingHump, PowerAdhesive, AsymptoticBlowup]


def sigma_eval(law: StressLaw, s):
    """Cell stress Sigma(s); raises DomainError outside the law's domain."""
    s_arr = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = law.sigma(s_arr)
    return float(out) if np.ndim(s) == 0 else out


class ConstitutivePair:
    """Phi, Phi', and Phi^-1 for one stress law.

    Immutable after ``__init__``. For laws without a closed-form Phi the
    cumulative quadrature table is finished before the object is returned.
    """

    def __init__(self, law: StressLaw):
        self.law = law
        self.degenerate_at_zero = bool(law.degenerate_at_zero)
        self.domain_upper: Optional[float] = law.domain_upper
        if hasattr(law, "phi"):
            self._phi = law.phi
            self.closed_form = True
        else:
            self._phi = self._tabulate(law)
            self.closed_form = False
        if isinstance(law, SaturatingHump):
            self.range = (-law.phi_bound, law.phi_bound)
        else:
            self.range = (-math.inf, math.inf)
        self._verify()

    @staticmethod
    def _tabulate(law):
        a = law.domain_upper
        nodes = np.concatenate([
            -np.geomspace(1e3, 1e-2, 600),
            np.linspace(-1e-2, 0.0, 11),
            np.linspace(0.0, 0.9 * a, 1201),
            a - 0.1 * a * np.geomspace(1.0, 1e-12, 3001),
        ])
        table = CumulativeIntegral(law.phi_prime, nodes, origin=0.0)

        def phi(s):
            s = np.asarray(s, dtype=float)
            with np.errstate(invalid="ignore"):
                inside = np.where(s < a, s, 0.0)
                val = table(inside, extrapolate=True)
            return np.where(s < a, val, np.inf)

        return phi

    def _verify(self):
        hi = 1.0 if self.domain_upper is None else min(1.0, self.domain_upper * (1 - 1e-9))
        s = np.linspace(-1.0, hi, 1000)
        vals = self.phi(s)
        if abs(float(self.phi(0.0))) > 0:
            raise ConstructionError("Phi(0) != 0")
        if np.any(np.diff(vals) <= 0):
            k = int(np.argmax(np.diff(vals) <= 0))
            raise ConstructionError(
                f"Phi not strictly increasing near s = {s[k]:.6g} (stress law violates H1)"
            )

    def phi(self, s):
        s_arr = np.asarray(s, dtype=float)
        out = self._phi(s_arr)
        return float(out) if np.ndim(s) == 0 else out

    def phi_prime(self, s):
        s_arr = np.asarray(s, dtype=float)
        out = self.law.phi_prime(s_arr)
        return float(out) if np.ndim(s) == 0 else out

    def in_range(self, u):
        u = np.asarray(u, dtype=float)
        lo, hi = self.range
        return (u > lo) & (u < hi) | (u == 0)

    def inverse(self, u):
        """Phi^-1(u) by bracketed Newton (bisection fallback); sign(s) = sign(u)."""
        u_arr = np.asarray(u, dtype=float)
        if not np.all(np.isfinite(u_arr)) or not np.all(self.in_range(u_arr)):
            raise RangeError(f"value outside the range {self.range} of Phi")
        if hasattr(self.law, "phi_inverse"):
            out = self.law.phi_inverse(u_arr)
        else:
            out = self._invert(u_arr.ravel()).reshape(u_arr.shape)
        return float(out) if np.ndim(u) == 0 else out

    def _invert(self, u):
        s = np.zeros_like(u)
        pos, neg = u > 0, u < 0
        lo = np.zeros_like(u)
        hi = np.zeros_like(u)
        cap = self.domain_upper
        # expand brackets
        hi[pos] = 1.0 if cap is None else 0.5 * cap
        while True:
            short = pos & (self.phi(hi) < u)
            if not short.any():
                break
            lo[short] = hi[short]
            if cap is None:
                hi[short] = 2 * hi[short]
            else:
                hi[short] = cap - 0.5 * (cap - hi[short])
                if np.any(hi[short] >= cap):
                    raise RangeError("Phi^-1 bracket reached the domain limit")
        lo[neg] = -1.0
        while True:
            short = neg & (self.phi(lo) > u)
            if not short.any():
                break
            hi[short] = lo[short]
            lo[short] = 2 * lo[short]
        active = pos | neg
        s[active] = 0.5 * (lo[active] + hi[active])
        for _ in range(400):
            if not active.any():
                break
            sa = s[active]
            F = self.phi(sa) - u[active]
            below = F < 0
            la, ha = lo[active], hi[active]
            la = np.where(below, sa, la)
            ha = np.where(below, ha, sa)
            d = self.phi_prime(sa)
            with np.errstate(divide="ignore", invalid="ignore"):
                cand = sa - F / d
            bad = ~np.isfinite(cand) | (cand <= la) | (cand >= ha)
            cand = np.where(bad, 0.5 * (la + ha), cand)
            step = np.abs(cand - sa)
            scale = np.maximum(np.abs(cand), 1e-300)
            done = (step <= 2e-16 * scale) | (F == 0) | (ha - la <= 4e-16 * scale)
            lo[active], hi[active] = la, ha
            s[active] = np.where(F == 0, sa, cand)
            idx = np.flatnonzero(active)
            active[idx[done]] = False
        return s


def build_pair(law: StressLaw) -> ConstitutivePair:
    return ConstitutivePair(law)


def phi_inverse(pair: ConstitutivePair, u):
    return pair.inverse(u)


@dataclass(frozen=True)
class PhiLipschitzCertificate:
    function_id: str
    interval: tuple
    constant: float
    sample_resolution: int
    witness: tuple = field(default=(), compare=False)

    def holds_for(self, pair: ConstitutivePair, f: Callable, s1, s2, rtol=1e-12) -> bool:
        s1 = np.asarray(s1, dtype=float)
        s2 = np.asarray(s2, dtype=float)
        lhs = (f(s2) - f(s1)) ** 2
        rhs = self.constant * (pair.phi(s2) - pair.phi(s1)) * (s2 - s1)
        return bool(np.all(lhs <= rhs * (1 + rtol) + 1e-300))


def _max_ratio(F, P, s):
    """Largest |dF|^2 / (dPhi ds) over all sample pairs; inf if a zero denominator meets a nonzero numerator."""
    best, arg = 0.0, (0, 0)
    n = s.size
    chunk = max(1, 4_000_000 // n)
    for i0 in range(0, n, chunk):
        i = np.arange(i0, min(n, i0 + chunk))[:, None]
        num = (F[None, :] - F[i]) ** 2
        den = (P[None, :] - P[i]) * (s[None, :] - s[i])
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(den > 0, num / den, np.where(num > 0, np.inf, 0.0))
        r[np.arange(r.shape[0]), i.ravel()] = 0.0
        k = np.unravel_index(np.argmax(r), r.shape)
        if r[k] > best:
            best, arg = float(r[k]), (int(i[k[0], 0]), int(k[1]))
    return best, arg


def phi_lipschitz_constant(
    pair: ConstitutivePair, f: Callable, interval, resolution: int = 2001, function_id: str = "f"
) -> PhiLipschitzCertificate:
    """Sample-based Phi-Lipschitz constant of ``f`` on ``interval``.

    The ratio is recomputed on the half- and quarter-resolution subsamples; growth
    by more than 1.5x at both refinements is read as an unbounded ratio.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    lo, hi = map(float, interval)
    if pair.domain_upper is not None and hi >= pair.domain_upper:
        raise DomainError("interval exceeds the constitutive domain")
    s = np.linspace(lo, hi, resolution)
    F = np.asarray(f(s), dtype=float) * np.ones_like(s)
    P = pair.phi(s)
    const, (i, j) = _max_ratio(F, P, s)
    if not math.isfinite(const):
        raise DegenerateError(
            f"{function_id}: Phi-Lipschitz ratio infinite at s = {s[i]:.6g}, {s[j]:.6g}"
        )
    if resolution >= 9 and const > 0:
        half, _ = _max_ratio(F[::2], P[::2], s[::2])
        quarter, _ = _max_ratio(F[::4], P[::4], s[::4])
        if half > 0 and quarter > 0 and const > 1.5 * half and half > 1.5 * quarter:
            raise DegenerateError(
                f"{function_id}: Phi-Lipschitz ratio grows under refinement "
                f"({quarter:.4g} -> {half:.4g} -> {const:.4g}) near s = {s[i]:.6g}"
            )
    return PhiLipschitzCertificate(function_id, (lo, hi), const, resolution, (float(s[i]), float(s[j])))
