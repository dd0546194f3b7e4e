"""TOML run configuration: schema, defaults, validation and object builders."""

from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import tomli

from . import constitutive as cst
from . import kinetics as kin
from .errors import ConfigError, ParseError, TumorPhaseError, ValidationError
from .geometry import Far, InterfaceTrajectory, Vascular, build_grid

MODES = ("evolve", "stationary", "dependence", "selftest", "dump")

LAWS = {
    "polynomial_overshoot": (cst.PolynomialOvershoot, ("a", "b", "n", "phi_star")),
    "saturating_hump": (cst.SaturatingHump, ("tau", "lam")),
    "power_adhesive": (cst.PowerAdhesive, ("n", "phi_star")),
    "asymptotic_blowup": (cst.AsymptoticBlowup, ("p", "phi_star", "phi_max")),
}

PRESETS = {
    "corrected_threshold": ("gamma1", "gamma2", "c_star"),
    "threshold_logistic": ("gamma", "c_star"),
    "breward": ("S0", "S1", "S2", "S3", "S4"),
    "energy_atp": ("k", "theta", "Q0M", "tau_half"),
    "stress_induced": ("gamma", "delta_s", "sigma_lo", "sigma_hi", "c_star", "width"),
    "factored": ("gamma_p", "gamma_d", "f_p", "f_d", "g_p", "g_d", "c_star", "k"),
}
ABSORPTION_KEYS = ("lam", "h", "q", "k_q")
F_NAMES = ("zero", "linear", "logistic", "phi", "phi_logistic")
G_NAMES = ("one", "zero", "linear", "excess", "deficit", "monod")
H_NAMES = ("zero", "linear", "logistic", "phi", "phi_logistic", "energy")
Q_NAMES = ("zero", "linear", "monod")

DEFAULTS: dict = {
    "mode": "evolve",
    "constitutive": {"law": "power_adhesive", "n": 2.0, "phi_star": 0.5},
    "kinetics": {
        "preset": "corrected_threshold", "delta": 0.1, "phi_max": 1.0,
        "tumor": {"gamma1": 2.0, "gamma2": 3.0, "c_star": 0.5, "lam": 1.0, "h": "linear", "q": "linear"},
    },
    "geometry": {"n_cells": 64, "left": "vascular", "right": "far", "eta": 1.0, "c_b": 1.0,
                 "phi_star": 0.5, "S": 0.5},
    "model": {"kappa": 1e-2, "D": 1.0},
    "initial": {"phi": "constant", "phi_value": None, "c": "constant", "c_value": None,
                "amplitude": 0.1},
    "solver": {"dt": 1e-3, "tol": 1e-10, "k_max": 500, "omega": 1.0, "eps_pos": None,
               "t_max": 0.1, "max_picard": 50},
    "output": {"snapshot_every": 10, "plots": True, "prefix": None},
    "dependence": {"eps": [1e-1, 1e-2, 1e-3, 1e-4]},
}

SECTION_KEYS = {
    "constitutive": {"law", "a", "b", "n", "phi_star", "tau", "lam", "p", "phi_max"},
    "kinetics": {"preset", "delta", "phi_max", "tumor", "host"},
    "geometry": {"n_cells", "left", "right", "eta", "c_b", "phi_star", "S", "S_table",
                 "tumor_start", "trajectory"},
    "model": {"kappa", "D"},
    "initial": {"phi", "phi_value", "c", "c_value", "amplitude"},
    "solver": {"dt", "tol", "k_max", "omega", "eps_pos", "t_max", "max_picard"},
    "output": {"snapshot_every", "plots", "prefix"},
    "dependence": {"eps"},
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def parse_config_text(text: str, source: str = "<string>") -> dict:
    try:
        return tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ParseError(f"{source}: {exc}") from exc


@dataclass
class RunConfig:
    """Resolved configuration. ``data`` holds every key with defaults filled in."""

    data: dict
    source: str = "<defaults>"

    def __getitem__(self, key):
        return self.data[key]

    @property
    def mode(self) -> str:
        return self.data["mode"]

    # builders -----------------------------------------------------------------
    def law(self):
        sec = self.data["constitutive"]
        cls, keys = LAWS[sec["law"]]
        return cls(**{k: sec[k] for k in keys})

    def pair(self):
        return cst.build_pair(self.law())

    def grid(self):
        g = self.data["geometry"]
        roles = []
        for side in ("left", "right"):
            if g[side] == "vascular":
                roles.append(Vascular(g["eta"], g["c_b"]))
            else:
                roles.append(Far(g["phi_star"], g["c_b"]))
        return build_grid(g["n_cells"], roles)

    def trajectory(self):
        g = self.data["geometry"]
        start = g.get("tumor_start")
        kind = g.get("trajectory", "constant")
        if g.get("S_table") is not None:
            st = None if start is None else InterfaceTrajectory.constant(start)
            return InterfaceTrajectory.table(g["S_table"], start=st)
        if kind == "static":
            return InterfaceTrajectory.static(g["S"], start)
        return InterfaceTrajectory.constant(g["S"], start)

    def kinetics(self, pair=None):
        k = self.data["kinetics"]
        pm = k["phi_max"]
        cb = self.data["geometry"]["c_b"]
        pair = pair if pair is not None else self.pair()
        pops = {}
        for a in ("tumor", "host"):
            sec = k[a]
            pops[a] = _population_args(k["preset"], sec, pm, cb, pair)
        return kin.make_spec(pops["tumor"], pops["host"], k["delta"], pm, cb,
                             c_star=k["tumor"].get("c_star", 0.0) or 0.0, name=k["preset"])

    def initial_fields(self, grid, seed: int = 0):
        ini = self.data["initial"]
        pm = self.data["kinetics"]["phi_max"]
        cb = grid.c_b
        phi_star = grid.phi_star if grid.phi_star is not None else 0.5 * pm
        x = grid.nodes
        rng = np.random.default_rng(seed)
        pair = self.pair()
        cap = pm if pair.domain_upper is None else min(pm, 0.95 * pair.domain_upper)

        def field(kind, value, default, hi):
            v = default if value is None else value
            if kind == "constant":
                out = np.full(x.size, float(v))
            elif kind == "bump":
                from .evolution import bump

                out = float(v) + ini["amplitude"] * bump(x, 0.5, 0.25)
            else:  # random smooth
                out = random_smooth(x, rng, 0.0, hi)
            return np.clip(out, 0.0, hi)

        phi = field(ini["phi"], ini["phi_value"], phi_star, cap)
        c = field(ini["c"], ini["c_value"], cb, cb)
        phi[grid.dirichlet_nodes] = phi_star
        c[grid.dirichlet_nodes] = cb
        return phi, c

    def evolution_problem(self, seed: int = 0):
        from .evolution import EvolutionProblem

        pair = self.pair()
        grid = self.grid()
        phi0, c0 = self.initial_fields(grid, seed)
        s, m = self.data["solver"], self.data["model"]
        return EvolutionProblem(
            grid=grid, pair=pair, spec=self.kinetics(pair), traj=self.trajectory(),
            kappa=m["kappa"], D=m["D"], phi0=phi0, c0=c0, t_max=s["t_max"], dt=s["dt"],
            tol=s["tol"], max_picard=s["max_picard"],
            snapshot_every=self.data["output"]["snapshot_every"],
        )

    def stationary_problem(self):
        from .stationary import StationaryProblem

        pair = self.pair()
        s, m = self.data["solver"], self.data["model"]
        return StationaryProblem(
            grid=self.grid(), pair=pair, spec=self.kinetics(pair), kappa=m["kappa"], D=m["D"],
            S=self.data["geometry"]["S"], eps_pos=s["eps_pos"], tol=s["tol"], k_max=s["k_max"],
            omega=s["omega"],
        )


def random_smooth(x, rng, lo, hi, modes: int = 5):
    """Random smooth profile on the nodes, rescaled to span [lo, hi]."""
    k = np.arange(1, modes + 1)
    amp = rng.normal(size=modes) / k ** 2
    phase = rng.uniform(0, 2 * np.pi, size=modes)
    f = np.sum(amp[:, None] * np.sin(k[:, None] * np.pi * x[None, :] + phase[:, None]), axis=0)
    span = f.max() - f.min()
    f = (f - f.min()) / span if span > 0 else np.full_like(x, 0.5)
    return lo + (hi - lo) * f


def _population_args(preset, sec, pm, cb, pair):
    ab = kin.Absorption(lam=sec.get("lam", 1.0), h=sec.get("h", "linear"), q=sec.get("q", "linear"),
                        k=sec.get("k_q", 1.0))
    if preset == "factored":
        cs, kk = sec.get("c_star", 0.0), sec.get("k", 1.0)
        h, q = kin.absorption_maps(ab, pm, pair)
        return dict(gamma_p=sec["gamma_p"], gamma_d=sec["gamma_d"], lam=ab.lam,
                    f_p=kin.f_factor(sec["f_p"], pm, pair), f_d=kin.f_factor(sec["f_d"], pm, pair),
                    g_p=kin.g_factor(sec["g_p"], cs, kk), g_d=kin.g_factor(sec["g_d"], cs, kk),
                    h=h, q=q, labels={n: sec[n] for n in ("f_p", "f_d", "g_p", "g_d")})
    if preset == "corrected_threshold":
        p = kin.CorrectedThreshold(sec["gamma1"], sec["gamma2"], sec["c_star"])
    elif preset == "threshold_logistic":
        p = kin.ThresholdLogistic(sec["gamma"], sec["c_star"])
    elif preset == "breward":
        p = kin.BrewardMM(*(sec[k] for k in PRESETS["breward"]))
    elif preset == "energy_atp":
        p = kin.EnergyATP(sec["k"], sec["theta"], sec["Q0M"], sec["tau_half"])
    else:
        p = kin.StressInduced(sec["gamma"], sec["delta_s"], sec["sigma_lo"], sec["sigma_hi"],
                              sec["c_star"], sec.get("width"))
    return kin.preset_population(p, ab, pm, cb, pair)


def _check_keys(raw: dict, issues: list):
    for k, v in raw.items():
        if k == "mode":
            continue
        if k not in SECTION_KEYS:
            issues.append(f"unknown section or key '{k}'")
            continue
        if not isinstance(v, dict):
            issues.append(f"'{k}' must be a table")
            continue
        for kk, vv in v.items():
            if kk not in SECTION_KEYS[k]:
                issues.append(f"unknown key '{k}.{kk}'")
            elif k == "kinetics" and kk in ("tumor", "host"):
                if not isinstance(vv, dict):
                    issues.append(f"'kinetics.{kk}' must be a table")
                    continue
                allowed = set(PRESETS.get(raw["kinetics"].get("preset", DEFAULTS["kinetics"]["preset"]), ())) | set(ABSORPTION_KEYS)
                for key in vv:
                    if key not in allowed:
                        issues.append(f"unknown key 'kinetics.{kk}.{key}' for this preset")


def _num(d, key, where, issues, lo=None, hi=None, strict_lo=False, integer=False, optional=False):
    v = d.get(key)
    if v is None and optional:
        return
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        issues.append(f"{where}.{key} must be a number, got {v!r}")
        return
    if integer and int(v) != v:
        issues.append(f"{where}.{key} must be an integer, got {v!r}")
    if lo is not None and (v <= lo if strict_lo else v < lo):
        issues.append(f"{where}.{key} = {v!r} must be {'>' if strict_lo else '>='} {lo}")
    if hi is not None and v > hi:
        issues.append(f"{where}.{key} = {v!r} must be <= {hi}")


def _validate(data: dict, issues: list):
    if data["mode"] not in MODES:
        issues.append(f"mode must be one of {MODES}, got {data['mode']!r}")
    c = data["constitutive"]
    if c.get("law") not in LAWS:
        issues.append(f"constitutive.law must be one of {tuple(LAWS)}, got {c.get('law')!r}")
    else:
        for key in LAWS[c["law"]][1]:
            if key not in c:
                issues.append(f"constitutive.{key} is required for law {c['law']}")
    k = data["kinetics"]
    if k.get("preset") not in PRESETS:
        issues.append(f"kinetics.preset must be one of {tuple(PRESETS)}, got {k.get('preset')!r}")
    _num(k, "delta", "kinetics", issues, lo=0.0)
    _num(k, "phi_max", "kinetics", issues, lo=0.0, hi=1.0, strict_lo=True)
    for a in ("tumor", "host"):
        sec = k.get(a, {})
        _num(sec, "lam", f"kinetics.{a}", issues, lo=0.0, optional=True)
        for key, names in (("h", H_NAMES), ("q", Q_NAMES)):
            if key in sec and sec[key] not in names:
                issues.append(f"kinetics.{a}.{key} must be one of {names}")
        if k.get("preset") == "factored":
            for key, names in (("f_p", F_NAMES), ("f_d", F_NAMES), ("g_p", G_NAMES), ("g_d", G_NAMES)):
                if sec.get(key) not in names:
                    issues.append(f"kinetics.{a}.{key} must be one of {names}")
            for key in ("gamma_p", "gamma_d"):
                _num(sec, key, f"kinetics.{a}", issues)
        elif k.get("preset") in PRESETS:
            for key in PRESETS[k["preset"]]:
                if key == "width":
                    _num(sec, key, f"kinetics.{a}", issues, lo=0.0, strict_lo=True, optional=True)
                elif key not in sec:
                    issues.append(f"kinetics.{a}.{key} is required for preset {k['preset']}")
                else:
                    _num(sec, key, f"kinetics.{a}", issues)
    g = data["geometry"]
    n = g.get("n_cells")
    if isinstance(n, (int, float)) and not isinstance(n, bool) and n < 4:
        issues.append(f"geometry.n_cells = {n!r} violates the grid precondition n_cells >= 4")
    else:
        _num(g, "n_cells", "geometry", issues, lo=4, integer=True)
    for side in ("left", "right"):
        if g.get(side) not in ("vascular", "far"):
            issues.append(f"geometry.{side} must be 'vascular' or 'far'")
    _num(g, "eta", "geometry", issues, lo=0.0, strict_lo=True)
    _num(g, "c_b", "geometry", issues, lo=0.0, strict_lo=True)
    _num(g, "phi_star", "geometry", issues, lo=0.0, strict_lo=True)
    if isinstance(g.get("S"), str):
        issues.append("geometry.S must be a number; use geometry.trajectory = 'static' for a fixed interface")
    else:
        _num(g, "S", "geometry", issues, lo=0.0, hi=1.0)
    _num(g, "tumor_start", "geometry", issues, lo=0.0, hi=1.0, optional=True)
    if g.get("trajectory", "constant") not in ("constant", "static", "table"):
        issues.append("geometry.trajectory must be 'constant', 'static' or 'table'")
    tbl = g.get("S_table")
    if tbl is not None:
        if not isinstance(tbl, list) or not all(isinstance(r, list) and len(r) == 2 for r in tbl):
            issues.append("geometry.S_table must be a list of [t, S] pairs")
    m = data["model"]
    _num(m, "kappa", "model", issues, lo=0.0, strict_lo=True)
    _num(m, "D", "model", issues, lo=0.0, strict_lo=True)
    ini = data["initial"]
    for key in ("phi", "c"):
        if ini.get(key) not in ("constant", "random", "bump"):
            issues.append(f"initial.{key} must be 'constant', 'random' or 'bump'")
    s = data["solver"]
    _num(s, "dt", "solver", issues, lo=0.0, strict_lo=True)
    _num(s, "tol", "solver", issues, lo=0.0, strict_lo=True)
    _num(s, "k_max", "solver", issues, lo=1, integer=True)
    _num(s, "max_picard", "solver", issues, lo=1, integer=True)
    _num(s, "omega", "solver", issues, lo=0.0, hi=1.0, strict_lo=True)
    _num(s, "t_max", "solver", issues, lo=0.0, strict_lo=True)
    _num(s, "eps_pos", "solver", issues, lo=0.0, strict_lo=True, optional=True)
    o = data["output"]
    _num(o, "snapshot_every", "output", issues, lo=1, integer=True)
    eps = data["dependence"].get("eps")
    if not isinstance(eps, list) or not eps or not all(isinstance(e, (int, float)) and e >= 0 for e in eps):
        issues.append("dependence.eps must be a nonempty list of nonnegative numbers")


def _hypothesis_signs(cfg: RunConfig, issues: list):
    """Strict sign violations of the rate hypotheses (zero rates are allowed)."""
    try:
        spec = cfg.kinetics()
    except (TumorPhaseError, KeyError, TypeError, ValueError) as exc:
        issues.append(f"kinetics could not be built: {exc}")
        return
    for a in ("T", "H"):
        pop = spec.population(a)
        if pop.gamma_p < 0:
            issues.append(f"H2 violated: gamma_{a}^p = {pop.gamma_p:g} < 0")
        if pop.gamma_d > 0:
            issues.append(f"H2 violated: gamma_{a}^d = {pop.gamma_d:g} > 0")
        if pop.lam < 0:
            issues.append(f"H5 violated: lam_{a} = {pop.lam:g} < 0")


def resolve(raw: dict, source: str = "<string>") -> RunConfig:
    issues: list = []
    _check_keys(raw, issues)
    kin_raw = raw.get("kinetics", {}) if isinstance(raw.get("kinetics"), dict) else {}
    defaults = copy.deepcopy(DEFAULTS)
    if "preset" in kin_raw and kin_raw["preset"] != defaults["kinetics"]["preset"]:
        defaults["kinetics"]["tumor"] = {}
    if "constitutive" in raw and isinstance(raw["constitutive"], dict) and "law" in raw["constitutive"]:
        defaults["constitutive"] = {}
    data = _merge(defaults, {k: v for k, v in raw.items() if k == "mode" or k in SECTION_KEYS})
    if "host" not in kin_raw:
        data["kinetics"]["host"] = copy.deepcopy(data["kinetics"]["tumor"])
    if issues:
        raise ValidationError(issues)
    _validate(data, issues)
    cfg = RunConfig(data, source)
    if not any(i.startswith(("geometry.", "mode")) for i in issues):
        for build in (cfg.grid, cfg.trajectory):
            try:
                build()
            except (ConfigError, ValueError) as exc:
                issues.append(str(exc))
    # the rate signs only need the law and the kinetics block
    if not any(i.startswith(("constitutive.", "kinetics.", "geometry.c_b")) for i in issues):
        try:
            cfg.law()
        except (ConfigError, ValueError) as exc:
            issues.append(str(exc))
        else:
            _hypothesis_signs(cfg, issues)
    if issues:
        raise ValidationError(issues)
    return cfg


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {p}: {exc}") from exc
    return resolve(parse_config_text(text, str(p)), str(p))


def default_config() -> RunConfig:
    return resolve({})


def to_jsonable(obj: Any):
    if isinstance(obj, dict):
        return {k: to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj
