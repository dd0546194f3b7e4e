"""Growth and nutrient-absorption kinetics for the tumor (T) and host (H) populations.

Growth has the factored form

    Gamma_a(phi, c) = sum_nu gamma_a^nu f_a^nu(phi) g_a^nu(c) - delta phi,   nu in {p, d}

and absorption Q_a(phi, c) = -lam_a h_a(phi) q_a(c). Presets that do not split
into this form carry a direct ``(phi, c) -> Gamma`` evaluator instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .constitutive import ConstitutivePair, phi_lipschitz_constant
from .errors import DegenerateError, DomainError, NotFactoredError

POPULATIONS = ("T", "H")


# --- sign-convention extensions outside the physical range -------------------

def extend_f_prolif(f, phi_max):
    """Zero outside [0, phi_max]: >= 0 below, <= 0 above, as the bounds proofs need."""

    def fp(phi):
        phi = np.asarray(phi, dtype=float)
        inside = (phi >= 0) & (phi <= phi_max)
        return np.where(inside, f(np.clip(phi, 0.0, phi_max)), 0.0)

    return fp


def extend_f_death(f, phi_max):
    """Odd reflection below 0 (clamped at -phi_max), constant continuation above phi_max."""

    def fd(phi):
        phi = np.asarray(phi, dtype=float)
        mag = f(np.clip(np.abs(phi), 0.0, phi_max))
        return np.where(phi < 0, -mag, f(np.clip(phi, 0.0, phi_max)))

    return fd


def extend_g(g, c_b):
    """Evaluate at max(c, 0): keeps g nonnegative on the whole line."""

    def ge(c):
        return g(np.maximum(np.asarray(c, dtype=float), 0.0))

    return ge


def extend_h(h, phi_max):
    def he(phi):
        return h(np.clip(np.asarray(phi, dtype=float), 0.0, phi_max))

    return he


def extend_q(q):
    """Odd reflection below 0."""

    def qe(c):
        c = np.asarray(c, dtype=float)
        mag = q(np.abs(c))
        return np.where(c < 0, -mag, mag)

    return qe


# --- named factor functions (used by presets and config files) --------------

def _const(value):
    return lambda x: np.full_like(np.asarray(x, dtype=float), value)


def f_factor(name: str, phi_max: float, pair: Optional[ConstitutivePair] = None, **kw):
    """Volume-ratio factors: zero, linear, logistic, phi, phi_logistic."""
    if name == "zero":
        return _const(0.0)
    if name == "linear":
        return lambda p: np.asarray(p, dtype=float) * 1.0
    if name == "logistic":
        return lambda p: np.asarray(p, dtype=float) * (phi_max - np.asarray(p, dtype=float))
    if name in ("phi", "phi_logistic"):
        if pair is None:
            raise ValueError(f"factor {name!r} needs the constitutive pair")
        if name == "phi":
            return lambda p: pair.phi(np.asarray(p, dtype=float))
        return lambda p: pair.phi(np.asarray(p, dtype=float)) * (phi_max - np.asarray(p, dtype=float))
    raise ValueError(f"unknown volume-ratio factor {name!r}")


def g_factor(name: str, c_star: float = 0.0, k: float = 1.0):
    """Nutrient factors: one, zero, linear, excess ((c-c*)^+), deficit ((c-c*)^-), monod."""
    if name == "one":
        return _const(1.0)
    if name == "zero":
        return _const(0.0)
    if name == "linear":
        return lambda c: np.asarray(c, dtype=float) * 1.0
    if name == "excess":
        return lambda c: np.maximum(np.asarray(c, dtype=float) - c_star, 0.0)
    if name == "deficit":
        return lambda c: np.maximum(c_star - np.asarray(c, dtype=float), 0.0)
    if name == "monod":
        return lambda c: np.asarray(c, dtype=float) / (1.0 + k * np.asarray(c, dtype=float))
    raise ValueError(f"unknown nutrient factor {name!r}")


# --- kinetics containers -----------------------------------------------------

@dataclass(frozen=True)
class PopulationKinetics:
    """Rates and factor maps of one population. Factor maps are vectorised numpy callables."""

    gamma_p: float
    gamma_d: float
    lam: float
    f_p: Callable
    f_d: Callable
    g_p: Callable
    g_d: Callable
    h: Callable
    q: Callable
    direct: Optional[Callable] = None
    labels: dict = field(default_factory=dict, compare=False)

    @property
    def factored(self) -> bool:
        return self.direct is None


@dataclass(frozen=True)
class KineticsSpec:
    tumor: PopulationKinetics
    host: PopulationKinetics
    delta: float
    phi_max: float = 1.0
    c_b: float = 1.0
    c_star: float = 0.0
    name: str = "custom"
    raw: Optional[dict] = field(default=None, compare=False)

    def population(self, alpha: str) -> PopulationKinetics:
        if alpha == "T":
            return self.tumor
        if alpha == "H":
            return self.host
        raise ValueError(f"unknown population {alpha!r}")

    @property
    def factored(self) -> bool:
        return self.tumor.factored and self.host.factored

    def raw_population(self, alpha: str) -> PopulationKinetics:
        """Factor maps as supplied, before the out-of-range extensions."""
        if self.raw is None:
            return self.population(alpha)
        return self.raw[alpha]


def extend_direct(gamma, phi_max):
    """Zero below 0 and frozen at phi_max above, so no growth is created out of range."""

    def ge(phi, c):
        phi, c = np.broadcast_arrays(np.asarray(phi, dtype=float), np.asarray(c, dtype=float))
        inner = gamma(np.clip(phi, 0.0, phi_max), c)
        return np.where(phi < 0, 0.0, inner)

    return ge


def make_population(gamma_p, gamma_d, lam, f_p, f_d, g_p, g_d, h, q, phi_max, c_b,
                    extend=True, direct=None, labels=None):
    """Wrap in-range factor maps with the default sign-preserving extensions."""
    raw = PopulationKinetics(gamma_p, gamma_d, lam, f_p, f_d, g_p, g_d, h, q, direct, labels or {})
    if not extend:
        return raw, raw
    ext = PopulationKinetics(
        gamma_p, gamma_d, lam,
        extend_f_prolif(f_p, phi_max), extend_f_death(f_d, phi_max),
        extend_g(g_p, c_b), extend_g(g_d, c_b),
        extend_h(h, phi_max), extend_q(q),
        None if direct is None else extend_direct(direct, phi_max), labels or {},
    )
    return ext, raw


def make_spec(tumor_args: dict, host_args: dict, delta, phi_max=1.0, c_b=1.0, c_star=0.0,
              name="custom", extend=True) -> KineticsSpec:
    t, t_raw = make_population(phi_max=phi_max, c_b=c_b, extend=extend, **tumor_args)
    h, h_raw = make_population(phi_max=phi_max, c_b=c_b, extend=extend, **host_args)
    return KineticsSpec(t, h, delta, phi_max, c_b, c_star, name, raw={"T": t_raw, "H": h_raw})


# --- evaluation ----------------------------------------------------------------

def gamma_eval(spec: KineticsSpec, alpha: str, phi, c):
    pop = spec.population(alpha)
    phi = np.asarray(phi, dtype=float)
    c = np.asarray(c, dtype=float)
    if pop.direct is not None:
        out = pop.direct(phi, c)
    else:
        out = (pop.gamma_p * pop.f_p(phi) * pop.g_p(c)
               + pop.gamma_d * pop.f_d(phi) * pop.g_d(c)
               - spec.delta * phi)
    return float(out) if out.ndim == 0 else out


def q_absorption_eval(spec: KineticsSpec, alpha: str, phi, c):
    pop = spec.population(alpha)
    phi = np.asarray(phi, dtype=float)
    c = np.asarray(c, dtype=float)
    out = -pop.lam * pop.h(phi) * pop.q(c)
    return float(out) if np.ndim(out) == 0 else out


def mollified_heaviside(x, width):
    """C^2 smoothstep: 0 for x <= -width, 1 for x >= width, 1/2 at 0."""
    if not width > 0:
        raise ValueError("width must be positive")
    t = np.clip((np.asarray(x, dtype=float) + width) / (2 * width), 0.0, 1.0)
    out = t**3 * (t * (6 * t - 15) + 10)
    return float(out) if out.ndim == 0 else out


# --- presets -------------------------------------------------------------------

@dataclass(frozen=True)
class BrewardMM:
    S0: float
    S1: float
    S2: float
    S3: float
    S4: float


@dataclass(frozen=True)
class ThresholdLogistic:
    gamma: float
    c_star: float


@dataclass(frozen=True)
class CorrectedThreshold:
    gamma1: float
    gamma2: float
    c_star: float


@dataclass(frozen=True)
class EnergyATP:
    k: float
    theta: float
    Q0M: float
    tau_half: float
    f: Callable = None
    g: Callable = None


@dataclass(frozen=True)
class StressInduced:
    gamma: float
    delta: float
    sigma_lo: float
    sigma_hi: float
    c_star: float
    width: Optional[float] = None


@dataclass(frozen=True)
class Absorption:
    """Q = -lam h(phi) q(c) with named factors."""

    lam: float = 1.0
    h: str = "linear"
    q: str = "linear"
    k: float = 1.0


def absorption_maps(ab: Absorption, phi_max, pair):
    if ab.h == "energy":
        h = lambda p: np.asarray(p, dtype=float) * (phi_max - np.asarray(p, dtype=float))
    else:
        h = f_factor(ab.h, phi_max, pair)
    return h, g_factor(ab.q, k=ab.k)


def preset_population(preset, absorption: Absorption, phi_max, c_b, pair=None):
    """Map a growth preset (plus absorption) onto PopulationKinetics constructor arguments."""
    h, q = absorption_maps(absorption, phi_max, pair)
    zero = _const(0.0)
    logistic = f_factor("logistic", phi_max)
    linear = f_factor("linear", phi_max)
    base = dict(lam=absorption.lam, h=h, q=q)
    if isinstance(preset, CorrectedThreshold):
        return dict(base, gamma_p=preset.gamma1, gamma_d=-preset.gamma2,
                    f_p=logistic, f_d=linear,
                    g_p=g_factor("excess", preset.c_star), g_d=g_factor("deficit", preset.c_star),
                    labels={"f_p": "logistic", "f_d": "linear", "g_p": "excess", "g_d": "deficit"})
    if isinstance(preset, ThresholdLogistic):
        return dict(base, gamma_p=preset.gamma, gamma_d=-preset.gamma,
                    f_p=logistic, f_d=logistic,
                    g_p=g_factor("excess", preset.c_star), g_d=g_factor("deficit", preset.c_star),
                    labels={"f_p": "logistic", "f_d": "logistic", "g_p": "excess", "g_d": "deficit"})
    if isinstance(preset, BrewardMM):
        S0, S1, S2, S3, S4 = preset.S0, preset.S1, preset.S2, preset.S3, preset.S4
        g_p = lambda c: np.asarray(c, dtype=float) / (1 + S1 * np.asarray(c, dtype=float))
        g_d = lambda c: (S2 + S3 * np.asarray(c, dtype=float)) / (1 + S4 * np.asarray(c, dtype=float))
        return dict(base, gamma_p=S0, gamma_d=-1.0, f_p=logistic, f_d=linear, g_p=g_p, g_d=g_d,
                    labels={"f_p": "logistic", "f_d": "linear", "g_p": "monod", "g_d": "breward_death"})
    if isinstance(preset, EnergyATP):
        f = preset.f or (lambda p: phi_max - np.asarray(p, dtype=float))
        g = preset.g or (lambda c: np.asarray(c, dtype=float))
        A = preset.k * math.log(2) / preset.Q0M
        B = preset.k * math.log(2) / (preset.theta * preset.tau_half)

        def direct(phi, c):
            x = f(phi) * g(np.maximum(c, 0.0)) - preset.theta
            return A * phi * np.maximum(x, 0.0) - B * phi * np.maximum(-x, 0.0)

        return dict(base, gamma_p=A, gamma_d=-B, f_p=zero, f_d=zero, g_p=zero, g_d=zero,
                    direct=direct, labels={"direct": "energy_atp"})
    if isinstance(preset, StressInduced):
        if pair is None:
            raise ValueError("StressInduced growth needs the constitutive pair")
        width = preset.width
        if width is None:
            width = max(0.01 * abs(preset.sigma_hi - preset.sigma_lo), 1e-6)
        law = pair.law

        def sigma(phi):
            with np.errstate(divide="ignore", invalid="ignore"):
                safe = np.where(phi == 0, 1e-300, phi)
                if law.domain_upper is not None:
                    safe = np.minimum(safe, law.domain_upper * (1 - 1e-15))
                return law.sigma(safe)

        def direct(phi, c):
            phi = np.asarray(phi, dtype=float)
            s = sigma(phi)
            drive = np.asarray(c, dtype=float) / preset.c_star - 1
            grow = preset.gamma * phi * mollified_heaviside(preset.sigma_lo - s, width) * drive
            die = preset.delta * phi * mollified_heaviside(s - preset.sigma_hi, width)
            return grow - die

        return dict(base, gamma_p=preset.gamma, gamma_d=-preset.delta, f_p=zero, f_d=zero,
                    g_p=zero, g_d=zero, direct=direct, labels={"direct": "stress_induced"})
    raise TypeError(f"unknown growth preset {preset!r}")


def build_kinetics(tumor_preset, host_preset=None, *, delta, phi_max=1.0, c_b=1.0,
                   absorption_T: Absorption = Absorption(), absorption_H: Optional[Absorption] = None,
                   pair: Optional[ConstitutivePair] = None, name=None) -> KineticsSpec:
    host_preset = tumor_preset if host_preset is None else host_preset
    absorption_H = absorption_T if absorption_H is None else absorption_H
    t = preset_population(tumor_preset, absorption_T, phi_max, c_b, pair)
    h = preset_population(host_preset, absorption_H, phi_max, c_b, pair)
    c_star = getattr(tumor_preset, "c_star", 0.0)
    spec = make_spec(t, h, delta, phi_max, c_b, c_star,
                     name=name or type(tumor_preset).__name__)
    return spec


# --- hypotheses -------------------------------------------------------------------

@dataclass
class HypothesisCheck:
    name: str
    status: str  # "pass" | "fail" | "advisory"
    detail: str = ""

    def to_dict(self):
        return {"hypothesis": self.name, "status": self.status, "detail": self.detail}


@dataclass
class ValidationReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.status != "fail" for c in self.checks)

    def failures(self):
        return [c for c in self.checks if c.status == "fail"]

    def status(self, name: str) -> str:
        """Worst status over all checks whose name starts with ``name``."""
        rank = {"pass": 0, "advisory": 1, "fail": 2}
        hits = [c.status for c in self.checks if c.name == name or c.name.startswith(name + " ")]
        if not hits:
            raise KeyError(name)
        return max(hits, key=rank.__getitem__)

    def to_dict(self):
        return {"passed": self.passed, "checks": [c.to_dict() for c in self.checks]}


def _first(mask, x):
    k = int(np.argmax(mask))
    return float(x[k])


def _lipschitz_estimate(g, lo, hi, n=2001):
    s = np.linspace(lo, hi, n)
    v = np.asarray(g(s), dtype=float) * np.ones_like(s)
    return float(np.max(np.abs(np.diff(v)) / np.diff(s)))


def validate_hypotheses(spec: KineticsSpec, pair: ConstitutivePair, resolution: int = 801) -> ValidationReport:
    """Sampled checks of H1-H7. Failures are recorded with a witness, never raised."""
    checks = []
    add = lambda name, ok, detail="": checks.append(HypothesisCheck(name, "pass" if ok else "fail", detail))
    pm, cb = spec.phi_max, spec.c_b
    phis = np.linspace(0.0, pm, resolution)
    below = np.linspace(-pm, 0.0, resolution)[:-1]
    above = np.linspace(pm, 2 * pm, resolution)[1:]
    cs = np.linspace(0.0, cb, resolution)
    c_line = np.linspace(-cb, 2 * cb, 3 * resolution)

    # H1
    if pair.domain_upper is not None and pair.domain_upper <= pm:
        checks.append(HypothesisCheck(
            "H1", "advisory",
            f"Phi' is infinite at s = {pair.domain_upper}; Phi is not smooth on [0, phi_max]"))
    else:
        add("H1", True, "Phi(0)=0 and strictly increasing (checked at construction)")

    # H2
    for a in POPULATIONS:
        pop = spec.population(a)
        if pop.gamma_p < 0:
            add(f"H2 gamma_{a}^p", False, f"gamma_{a}^p = {pop.gamma_p:g} < 0")
        elif pop.gamma_p == 0:
            checks.append(HypothesisCheck(f"H2 gamma_{a}^p", "advisory", f"gamma_{a}^p = 0"))
        else:
            add(f"H2 gamma_{a}^p", True)
        if pop.gamma_d >= 0:
            status = "advisory" if pop.gamma_d == 0 else "fail"
            checks.append(HypothesisCheck(f"H2 gamma_{a}^d", status, f"gamma_{a}^d = {pop.gamma_d:g} >= 0"))
        else:
            add(f"H2 gamma_{a}^d", True)
    if spec.delta < 0:
        add("H2 delta", False, f"delta = {spec.delta:g} < 0")
    elif spec.delta == 0:
        checks.append(HypothesisCheck("H2 delta", "advisory", "delta = 0"))
    else:
        add("H2 delta", True)

    for a in POPULATIONS:
        pop = spec.population(a)
        if not pop.factored:
            # direct evaluator: check the sign structure the bounds proofs use
            cc = np.linspace(0.0, cb, 41)[:, None]
            lo_ok = np.all(gamma_eval(spec, a, below[None, :], cc) >= -1e-14)
            hi_ok = np.all(gamma_eval(spec, a, above[None, :], cc) <= 1e-14)
            zero_ok = np.all(gamma_eval(spec, a, np.zeros(41), cc.ravel()) == 0)
            add(f"H3 Gamma_{a} sign (direct)", lo_ok and hi_ok and zero_ok,
                "Gamma >= 0 for phi < 0, <= 0 for phi > phi_max, 0 at phi = 0" if lo_ok and hi_ok and zero_ok
                else "sign structure violated outside [0, phi_max]")
            checks.append(HypothesisCheck(f"H3 {a} factored", "advisory",
                                          "non-factored preset: Phi-Lipschitz checks not applicable"))
            continue
        raw = spec.raw_population(a)
        for nu, fe, fr in (("p", pop.f_p, raw.f_p), ("d", pop.f_d, raw.f_d)):
            tag = f"f_{a}^{nu}"
            vals = np.asarray(fr(phis), dtype=float) * np.ones_like(phis)
            add(f"H3 {tag} bounded", bool(np.all(np.isfinite(vals))))
            neg = vals < -1e-14
            add(f"H3 {tag} nonnegative", not neg.any(),
                "" if not neg.any() else f"{tag}({_first(neg, phis):.4g}) < 0")
            try:
                cert = phi_lipschitz_constant(pair, fr, (0.0, pm * (1 - 1e-9) if pair.domain_upper == pm else pm),
                                              resolution=min(resolution, 801), function_id=tag)
                add(f"H3 {tag} Phi-Lipschitz", True, f"Lip_Phi ~ {cert.constant:.6g}")
            except DegenerateError as exc:
                add(f"H3 {tag} Phi-Lipschitz", False, str(exc))
        fp, fd = pop.f_p, pop.f_d
        ok = (np.all(fp(below) >= 0) and np.all(fp(above) <= 0)
              and abs(float(fp(0.0))) == 0 and abs(float(raw.f_p(pm))) < 1e-14)
        add(f"H3.1 f_{a}^p", ok, "" if ok else
            f"f_{a}^p(0) = {float(raw.f_p(0.0)):g}, f_{a}^p(phi_max) = {float(raw.f_p(pm)):g}")
        ok = np.all(fd(below) <= 0) and np.all(fd(above) >= 0) and float(raw.f_d(0.0)) == 0
        add(f"H3.2 f_{a}^d", bool(ok), "" if ok else f"f_{a}^d(0) = {float(raw.f_d(0.0)):g}")
        dvals = np.asarray(raw.f_d(phis), dtype=float) * np.ones_like(phis)
        dec = np.diff(dvals) < -1e-14
        add(f"H3.3 f_{a}^d", not dec.any(),
            "" if not dec.any() else f"f_{a}^d decreases near phi = {_first(dec, phis):.4g}")
        for nu, g in (("p", pop.g_p), ("d", pop.g_d)):
            tag = f"g_{a}^{nu}"
            v = np.asarray(g(c_line), dtype=float) * np.ones_like(c_line)
            neg = v < -1e-14
            add(f"H4 {tag} nonnegative", not neg.any(),
                "" if not neg.any() else f"{tag}({_first(neg, c_line):.4g}) < 0")
            L1 = _lipschitz_estimate(g, -cb, 2 * cb, 1001)
            L2 = _lipschitz_estimate(g, -cb, 2 * cb, 4001)
            ok = np.isfinite(L2) and L2 <= 1.5 * L1 + 1e-12
            add(f"H4 {tag} Lipschitz", bool(ok), f"Lip ~ {L2:.6g}")

        # H5-H7
        add(f"H5 lam_{a}", pop.lam > 0, f"lam_{a} = {pop.lam:g}")
        hv = np.asarray(pop.h(np.concatenate([below, phis, above])), dtype=float)
        add(f"H6 h_{a} nonnegative", bool(np.all(hv >= -1e-14)))
        try:
            cert = phi_lipschitz_constant(pair, raw.h, (0.0, pm * (1 - 1e-9) if pair.domain_upper == pm else pm),
                                          resolution=min(resolution, 801), function_id=f"h_{a}")
            add(f"H6 h_{a} Phi-Lipschitz", True, f"Lip_Phi ~ {cert.constant:.6g}")
        except DegenerateError as exc:
            add(f"H6 h_{a} Phi-Lipschitz", False, str(exc))
        qv = np.asarray(raw.q(cs), dtype=float) * np.ones_like(cs)
        add(f"H7 q_{a} nonnegative", bool(np.all(qv >= -1e-14) and np.all(np.isfinite(qv))))
        ok = float(raw.q(0.0)) == 0 and np.all(pop.q(-cs[1:]) <= 0)
        add(f"H7.1 q_{a}", bool(ok), "" if ok else f"q_{a}(0) = {float(raw.q(0.0)):g}")
        dec = np.diff(qv) < -1e-14
        add(f"H7.2 q_{a}", not dec.any(),
            "" if not dec.any() else f"q_{a} decreases near c = {_first(dec, cs):.4g}")
    return ValidationReport(checks)
