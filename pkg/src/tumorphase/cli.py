"""Command-line front end: config ingestion, run orchestration and result files.

Every data file gets a ``.meta.json`` companion with the resolved config. Exit
codes: 0 ok, 2 config error, 3 solver failure, 4 internal error. Failures print
one JSON object on stderr.
"""

from __future__ import annotations

import functools
import json
import logging
import sys
import warnings
from pathlib import Path

import click
import numpy as np

from . import __version__
from . import config as cfgmod
from . import output as io
from .errors import (ConfigError, DegenerateError, NotFactoredError, ParseError, RangeError,
                     RegimeError, SolveError, TumorPhaseError, ValidationError)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_INTERNAL = 0, 2, 3, 4

_CONFIG_ERRORS = (ParseError, ValidationError, ConfigError, RegimeError, NotFactoredError)
_SOLVER_ERRORS = (SolveError, DegenerateError, RangeError, FloatingPointError)


class Failure(Exception):
    def __init__(self, code, kind, message, issues=None):
        super().__init__(message)
        self.code, self.kind, self.message, self.issues = code, kind, message, issues


def classify(exc: BaseException) -> Failure:
    if isinstance(exc, Failure):
        return exc
    issues = list(getattr(exc, "issues", []) or []) or None
    if isinstance(exc, _CONFIG_ERRORS):
        return Failure(EXIT_CONFIG, type(exc).__name__, str(exc), issues)
    if isinstance(exc, _SOLVER_ERRORS) or isinstance(exc, TumorPhaseError):
        return Failure(EXIT_SOLVER, type(exc).__name__, str(exc), issues)
    return Failure(EXIT_INTERNAL, type(exc).__name__, str(exc), issues)


def _error_json(f: Failure) -> str:
    body = {"status": "error", "exit_code": f.code, "error": f.kind, "message": f.message}
    if f.issues:
        body["issues"] = f.issues
    return json.dumps(body, sort_keys=True)


class Context:
    def __init__(self, config, out, seed, quiet):
        self.config_path = config
        self.out = Path(out)
        self.seed = seed
        self.quiet = quiet
        self._cfg = None

    @property
    def cfg(self) -> cfgmod.RunConfig:
        if self._cfg is None:
            self._cfg = cfgmod.load_config(self.config_path) if self.config_path else cfgmod.default_config()
        return self._cfg

    @property
    def meta_config(self) -> dict:
        d = cfgmod.to_jsonable(self.cfg.data)
        return {"source": self.cfg.source, "seed": self.seed, "resolved": d}

    def outdir(self) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        return self.out

    def plots_enabled(self) -> bool:
        return bool(self.cfg["output"]["plots"])

    def name(self, stem: str) -> Path:
        prefix = self.cfg["output"]["prefix"]
        return self.outdir() / (f"{prefix}_{stem}" if prefix else stem)

    def emit(self, obj):
        if not self.quiet:
            click.echo(json.dumps(cfgmod.to_jsonable(obj), indent=2, sort_keys=True, default=str))

    def data_file(self, stem, header, columns, extra=None):
        path = io.write_csv(self.name(stem), header, columns)
        io.write_metadata(path, self.meta_config, extra)
        return path


def _common(f):
    @click.option("--config", "config", type=click.Path(dir_okay=False), default=None,
                  help="TOML run configuration (defaults are used when omitted).")
    @click.option("--out", "out", type=click.Path(file_okay=False), default="tumorphase-out",
                  show_default=True, help="Output directory.")
    @click.option("--seed", type=int, default=0, show_default=True, help="Seed for random initial data.")
    @click.option("--quiet", is_flag=True, help="Suppress the JSON summary on stdout.")
    @functools.wraps(f)
    def wrapper(config, out, seed, quiet, **kw):
        ctx = Context(config, out, seed, quiet)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore" if quiet else "default")
                f(ctx, **kw)
        except click.exceptions.Exit:
            raise
        except (click.ClickException, click.Abort):
            raise
        except Exception as exc:  # every failure leaves as JSON with a mapped exit code
            fail = classify(exc)
            click.echo(_error_json(fail), err=True)
            sys.exit(fail.code)

    return wrapper


# --- modes ------------------------------------------------------------------------

def do_evolve(ctx: Context):
    from . import plotting
    from .evolution import h8_check, run

    cfg = ctx.cfg
    problem = cfg.evolution_problem(ctx.seed)
    try:
        h8_check(problem)
    except ValueError as exc:
        raise ConfigError(f"initial data violate H8: {exc}") from exc
    traj = run(problem)
    csv = io.write_snapshots(ctx.name("evolve.csv"), problem.grid, traj.times, traj.phi, traj.c)
    extremes = traj.audit_extremes()
    io.write_metadata(csv, ctx.meta_config, {"audit": extremes})
    a = traj.audit
    ctx.data_file("audit.csv", ("t", "dt", "phi_min", "phi_max", "c_min", "c_max", "picard", "residual"),
                  ([r.t for r in a], [r.dt for r in a], [r.phi_min for r in a], [r.phi_max for r in a],
                   [r.c_min for r in a], [r.c_max for r in a], [r.picard for r in a], [r.residual for r in a]))
    io.write_gnuplot(ctx.name("evolve.gp"), csv.name, (3, 4), xcol=2, title="phi and c snapshots",
                     png=csv.stem + "_gnuplot.png")
    if ctx.plots_enabled():
        x = problem.grid.nodes
        plotting.plot_profiles(ctx.name("evolve_phi.png"), x, traj.times, traj.phi, "phi")
        plotting.plot_profiles(ctx.name("evolve_c.png"), x, traj.times, traj.c, "c")
        plotting.plot_bounds(ctx.name("evolve_bounds.png"), a, problem.spec.phi_max, problem.grid.c_b)
    ctx.emit({"status": "ok", "mode": "evolve", "steps": len(a), "t_final": traj.times[-1],
              "audit": extremes, "csv": str(csv)})


def do_stationary(ctx: Context):
    from . import plotting
    from .stationary import fixed_point_solve

    problem = ctx.cfg.stationary_problem()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rep = fixed_point_solve(problem)
    report = rep.to_dict()
    report["warnings"] = [str(w.message) for w in caught]
    x = problem.grid.nodes
    csv = ctx.data_file("stationary.csv", ("x", "phi", "c"), (x, rep.phi, rep.c), {"report": report})
    io.write_json(ctx.name("stationary_report.json"), report)
    io.write_gnuplot(ctx.name("stationary.gp"), csv.name, (2, 3), xcol=1, title="stationary state",
                     png=csv.stem + "_gnuplot.png")
    if ctx.plots_enabled():
        plotting.plot_stationary(ctx.name("stationary.png"), x, rep.phi, rep.c)
        if rep.history:
            plotting.plot_history(ctx.name("stationary_history.png"), rep.history)
    ctx.emit({"status": "ok", "mode": "stationary", **report})
    if not rep.converged:
        raise Failure(EXIT_SOLVER, "NoConvergence", f"fixed point did not converge in {rep.iterations} iterations")


def do_dependence(ctx: Context):
    from . import plotting
    from .evolution import continuous_dependence_experiment

    problem = ctx.cfg.evolution_problem(ctx.seed)
    eps_list = [float(e) for e in ctx.cfg["dependence"]["eps"]]
    reports = [continuous_dependence_experiment(problem, e) for e in eps_list]
    ratios = [r.ratio for r in reports]
    finite = [r for r in ratios if r is not None and r > 0]
    spread = max(finite) / min(finite) if finite else None
    summary = {"reports": [r.to_dict() for r in reports], "ratio_spread": spread}
    path = io.write_json(ctx.name("dependence.json"), summary)
    io.write_metadata(path, ctx.meta_config)
    csv = ctx.data_file("dependence.csv", ("eps", "lhs", "rhs", "ratio"),
                        (eps_list, [r.lhs for r in reports], [r.rhs for r in reports],
                         [np.nan if r is None else r for r in ratios]))
    io.write_gnuplot(ctx.name("dependence.gp"), csv.name, (4,), xcol=1, title="stability ratio",
                     png=csv.stem + "_gnuplot.png")
    if ctx.plots_enabled():
        plotting.plot_dependence(ctx.name("dependence.png"), eps_list, ratios)
    ctx.emit({"status": "ok", "mode": "dependence", "ratios": ratios, "ratio_spread": spread})


def selftest_checks() -> list:
    """Poisson oracles, the trivial steady state and constitutive round trips."""
    from . import constitutive as cst
    from . import kinetics as kin
    from .geometry import Far, Vascular, build_grid
    from .poisson import poincare_constant, poisson_operator
    from .stationary import StationaryProblem, fixed_point_solve

    checks = []

    def add(name, ok, **detail):
        checks.append({"check": name, "passed": bool(ok), **cfgmod.to_jsonable(detail)})

    for n in (16, 64, 256):
        g = build_grid(n, [Vascular(1.0, 1.0), Far(0.5, 1.0)])
        op = poisson_operator(g)
        x = g.nodes
        err = float(np.max(np.abs(op.apply(np.ones_like(x)) - (1 - x ** 2) / 2)))
        werr = abs(op.weak_norm(np.ones_like(x)) ** 2 - 1 / 3)
        add(f"poisson P(1) n={n}", err <= 2 * g.h ** 2, error=err, h=g.h)
        add(f"poisson weak norm n={n}", werr <= 5 * g.h ** 2, error=werr, h=g.h)
    cp = poincare_constant(build_grid(256, [Vascular(1.0, 1.0), Far(0.5, 1.0)]))
    add("poincare constant n=256", abs(cp / (2 / np.pi) - 1) < 0.02, C_P=cp)

    pair = cst.build_pair(cst.PowerAdhesive(2.0, 0.5))
    zero = dict(gamma_p=0.0, gamma_d=0.0, lam=0.0,
                f_p=kin.f_factor("zero", 1.0), f_d=kin.f_factor("zero", 1.0),
                g_p=kin.g_factor("zero"), g_d=kin.g_factor("zero"),
                h=kin.f_factor("linear", 1.0), q=kin.g_factor("linear"))
    spec = kin.make_spec(zero, zero, 0.0, 1.0, 1.0, name="trivial")
    grid = build_grid(32, [Vascular(1.0, 1.0), Far(0.5, 1.0)])
    rep = fixed_point_solve(StationaryProblem(grid, pair, spec, 1.0, 1.0), constants=False)
    dev = max(float(np.max(np.abs(rep.phi - 0.5))), float(np.max(np.abs(rep.c - 1.0))))
    add("trivial steady state", dev <= 1e-12 and rep.iterations <= 2, deviation=dev, iterations=rep.iterations)

    laws = [cst.PolynomialOvershoot(1.0, 2.0, 3, 0.5), cst.SaturatingHump(1.0, 1.0),
            cst.PowerAdhesive(2.0, 0.5), cst.AsymptoticBlowup(1.0, 0.5, 1.0)]
    for law in laws:
        p = cst.build_pair(law)
        top = 1.0 if p.domain_upper is None else 0.99 * p.domain_upper
        s = np.linspace(0.0, top, 101)
        err = float(np.max(np.abs(p.inverse(p.phi(s)) - s)))
        add(f"round trip {type(law).__name__}", err <= 1e-8, error=err)
    return checks


def do_selftest(ctx: Context, poisson_only: bool = False):
    checks = selftest_checks()
    if poisson_only:
        checks = [c for c in checks if c["check"].startswith(("poisson", "poincare"))]
    ok = all(c["passed"] for c in checks)
    ctx.outdir()
    io.write_json(ctx.name("selftest.json"), {"passed": ok, "checks": checks, "version": __version__})
    if not ctx.quiet:
        for c in checks:
            click.echo(f"{'PASS' if c['passed'] else 'FAIL'}  {c['check']}")
    if not ok:
        raise Failure(EXIT_SOLVER, "SelftestFailed", "one or more self checks failed",
                      [c["check"] for c in checks if not c["passed"]])


def _sigma_or_nan(law, s):
    """Sigma on ``s`` with NaN where the law is singular (e.g. at s = 0)."""
    from .constitutive import sigma_eval
    from .errors import DomainError

    try:
        return np.asarray(sigma_eval(law, s), dtype=float)
    except DomainError:
        out = np.full(s.shape, np.nan)
        for i, v in enumerate(s):
            try:
                out[i] = sigma_eval(law, v)
            except DomainError:
                pass
        return out


def do_dump_constitutive(ctx: Context, points: int = 401):
    from . import plotting

    pair = ctx.cfg.pair()
    pm = ctx.cfg["kinetics"]["phi_max"]
    top = pm if pair.domain_upper is None else min(pm, 0.999 * pair.domain_upper)
    s = np.linspace(0.0, top, points)
    cols = (s, _sigma_or_nan(pair.law, s), pair.phi(s), pair.phi_prime(s))
    csv = ctx.data_file("constitutive.csv", ("s", "sigma", "Phi", "Phi_prime"), cols)
    io.write_gnuplot(ctx.name("constitutive.gp"), csv.name, (2, 3, 4), title="constitutive law",
                     png=csv.stem + "_gnuplot.png")
    if ctx.plots_enabled():
        plotting.plot_curves(ctx.name("constitutive.png"), s,
                             {"sigma": cols[1], "Phi": cols[2], "Phi'": cols[3]}, "s")
    ctx.emit({"status": "ok", "mode": "dump", "table": "constitutive", "rows": points, "csv": str(csv)})


def do_dump_kinetics(ctx: Context, points: int = 41):
    from . import plotting
    from .kinetics import gamma_eval, q_absorption_eval

    spec = ctx.cfg.kinetics()
    cb = ctx.cfg.grid().c_b
    phi = np.linspace(0.0, spec.phi_max, points)
    c = np.linspace(0.0, cb, points)
    P, C = np.meshgrid(phi, c, indexing="ij")
    tables = {}
    for a in ("T", "H"):
        tables[f"Gamma_{a}"] = gamma_eval(spec, a, P.ravel(), C.ravel())
        tables[f"Q_{a}"] = q_absorption_eval(spec, a, P.ravel(), C.ravel())
    header = ("phi", "c", *tables)
    csv = ctx.data_file("kinetics.csv", header, (P.ravel(), C.ravel(), *tables.values()))
    io.write_gnuplot(ctx.name("kinetics.gp"), csv.name, (3, 5), xcol=1, title="growth and absorption",
                     png=csv.stem + "_gnuplot.png")
    if ctx.plots_enabled():
        plotting.plot_heatmap(ctx.name("kinetics_gamma_T.png"), phi, c,
                              tables["Gamma_T"].reshape(P.shape).T, "phi", "c", "Gamma_T")
        plotting.plot_heatmap(ctx.name("kinetics_q_T.png"), phi, c,
                              tables["Q_T"].reshape(P.shape).T, "phi", "c", "Q_T")
    ctx.emit({"status": "ok", "mode": "dump", "table": "kinetics", "rows": int(P.size), "csv": str(csv)})


_MODE_RUNNERS = {"evolve": do_evolve, "stationary": do_stationary, "dependence": do_dependence,
                 "selftest": do_selftest, "dump": lambda ctx: (do_dump_constitutive(ctx), do_dump_kinetics(ctx))}


# --- click wiring -----------------------------------------------------------------

@click.group()
@click.version_option(__version__, prog_name="tumorphase")
@click.option("-v", "--verbose", count=True, help="Log solver progress to stderr.")
def main(verbose):
    """Two-population cell/nutrient growth simulator."""
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command()
@_common
def run(ctx):
    """Run the mode named in the config file."""
    _MODE_RUNNERS[ctx.cfg.mode](ctx)


@main.command()
@_common
def evolve(ctx):
    """Integrate the time-dependent system and write snapshots."""
    do_evolve(ctx)


@main.command()
@click.argument("action", type=click.Choice(["solve"]), default="solve", required=False)
@_common
def stationary(ctx, action):
    """Solve the stationary system and report both smallness constants."""
    do_stationary(ctx)


@main.command()
@_common
def dependence(ctx):
    """Perturbation sweep measuring the stability ratio."""
    do_dependence(ctx)


@main.command()
@_common
def selftest(ctx):
    """Run built-in oracle checks."""
    do_selftest(ctx)


@main.group()
def dump():
    """Tabulate model ingredients to CSV."""


@dump.command("constitutive")
@click.option("--points", type=click.IntRange(2), default=401, show_default=True)
@_common
def dump_constitutive(ctx, points):
    do_dump_constitutive(ctx, points)


@dump.command("kinetics")
@click.option("--points", type=click.IntRange(2), default=41, show_default=True)
@_common
def dump_kinetics(ctx, points):
    do_dump_kinetics(ctx, points)


# per-module aliases
@main.group("constitutive")
def constitutive_group():
    """Constitutive-law utilities."""


@constitutive_group.command("dump")
@click.option("--points", type=click.IntRange(2), default=401, show_default=True)
@_common
def constitutive_dump(ctx, points):
    do_dump_constitutive(ctx, points)


@main.group("kinetics")
def kinetics_group():
    """Kinetics utilities."""


@kinetics_group.command("table")
@click.option("--points", type=click.IntRange(2), default=41, show_default=True)
@_common
def kinetics_table(ctx, points):
    do_dump_kinetics(ctx, points)


@main.group("poisson")
def poisson_group():
    """Inverse-Laplacian utilities."""


@poisson_group.command("selftest")
@_common
def poisson_selftest(ctx):
    do_selftest(ctx, poisson_only=True)


if __name__ == "__main__":  # pragma: no cover
    main()
