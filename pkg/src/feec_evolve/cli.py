"""Command-line front end for convergence studies.

Examples
--------
::

    feec-evolve heat --pair RT0/DG0 --levels 2..5 --out results/
    feec-evolve wave --scheme cn --levels 2..4 --json
    feec-evolve semilinear --config study.yaml
    feec-evolve list

A study configuration file is YAML with the keys of :class:`StudyConfig`;
command-line flags override file values. Exit status is 0 when every
judged norm meets its predicted order, 1 when one does not, 2 on
configuration errors and 3 on solver failures.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
import sympy as sp
import yaml

from .analysis import (
    EOC_TOLERANCE,
    HYPERBOLIC_EOC_TOLERANCE,
    ConvergenceReport,
    bochner_error,
    field_errors,
    hyperbolic_error_terms,
    predicted_orders,
)
from .assembly import ADMISSIBLE_PAIRS, LoadAssembler, assemble_mixed
from .elements import build_space, canonical_interpolation, element
from .errors import ConfigurationError, SolverError
from .manufactured import CATALOG, NONLINEARITIES, T as T_SYM, X, Y, from_expression
from .mesh import refine_uniform, unit_square_mesh
from .solvers import (
    SaddleSolver,
    Scheme,
    elliptic_projection,
    energy,
    run_hyperbolic,
    run_parabolic,
    run_semilinear,
    time_grid,
)

__all__ = ["StudyConfig", "run_study", "list_defaults", "load_config", "main"]

PROBLEMS = ("elliptic", "heat", "wave", "semilinear")
DT_RULES = ("auto", "h", "h2", "fixed")
MAX_LEVEL = 7

DEFAULT_SOLUTION = {
    "elliptic": "elliptic-sine",
    "heat": "heat-separable",
    "wave": "wave-standing",
    "semilinear": "semilinear-sin",
}
# dt = factor * h (CN) or factor * h^2 (backward Euler)
DEFAULT_DT_FACTOR = {"h": 1 / 8, "h2": 1 / 4}

_SCHEME_ALIASES = {
    "be": Scheme.BACKWARD_EULER,
    "backward-euler": Scheme.BACKWARD_EULER,
    "backwardeuler": Scheme.BACKWARD_EULER,
    "cn": Scheme.CRANK_NICOLSON,
    "crank-nicolson": Scheme.CRANK_NICOLSON,
    "cranknicolson": Scheme.CRANK_NICOLSON,
}

# initial-state checks applied to every parabolic run
THETA0_TOL = 1e-10
EPS0_TOL = 1e-9
ENERGY_DRIFT_TOL = 1e-8


@dataclass(frozen=True)
class StudyConfig:
    """One convergence study.

    ``solution`` is a catalog name or an inline expression in ``x, y, t``
    (``sin``, ``cos``, ``exp``, ``pi``, polynomials). ``dt_rule`` is
    ``"h"`` (``dt = dt_value * h``), ``"h2"`` (``dt = dt_value * h^2``),
    ``"fixed"`` (``dt = dt_value``) or ``"auto"``, which picks ``h2`` for
    backward Euler and ``h`` for Crank-Nicolson.
    """

    problem: str
    sigma_element: str = "RT0"
    u_element: str = "DG0"
    levels: tuple = (2, 5)
    T: float = 0.5
    dt_rule: str = "auto"
    dt_value: float | None = None
    scheme: str | None = None
    solution: str | None = None
    nonlinearity: str | None = None
    lipschitz: float | None = None
    tolerance: float | None = None
    out: str | None = None

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ConfigurationError(
                f"field 'problem': {self.problem!r} not in {', '.join(PROBLEMS)}"
            )
        pair = (_canon_element(self.sigma_element, "sigma_element"),
                _canon_element(self.u_element, "u_element"))
        if pair not in ADMISSIBLE_PAIRS:
            raise ConfigurationError(
                f"field 'pair': {pair[0]}/{pair[1]} is not admissible; choose from "
                + ", ".join(f"{a}/{b}" for a, b in ADMISSIBLE_PAIRS)
            )
        object.__setattr__(self, "sigma_element", pair[0])
        object.__setattr__(self, "u_element", pair[1])
        object.__setattr__(self, "levels", _levels(self.levels))
        if not (isinstance(self.T, (int, float)) and math.isfinite(self.T) and self.T > 0):
            raise ConfigurationError(f"field 'T': must be a positive number, got {self.T!r}")
        if self.dt_rule not in DT_RULES:
            raise ConfigurationError(
                f"field 'dt_rule': {self.dt_rule!r} not in {', '.join(DT_RULES)}"
            )
        if self.dt_rule == "fixed" and self.dt_value is None:
            raise ConfigurationError("field 'dt_value': required when dt_rule is 'fixed'")
        if self.dt_value is not None and not self.dt_value > 0:
            raise ConfigurationError(f"field 'dt_value': must be positive, got {self.dt_value!r}")
        scheme = self.scheme
        if scheme is None:
            scheme = "cn" if self.problem == "wave" else "be"
        key = str(scheme).lower().replace("_", "-")
        if key not in _SCHEME_ALIASES:
            raise ConfigurationError(f"field 'scheme': unknown scheme {scheme!r}")
        object.__setattr__(self, "scheme", _SCHEME_ALIASES[key].value)
        if self.problem == "semilinear" and self.scheme != "be":
            raise ConfigurationError(
                "field 'scheme': the semi-linear solver is backward Euler only"
            )
        if self.solution is None:
            object.__setattr__(self, "solution", DEFAULT_SOLUTION[self.problem])
        if self.nonlinearity is not None and self.problem != "semilinear":
            raise ConfigurationError("field 'nonlinearity': only used by semilinear studies")
        if self.tolerance is not None and not self.tolerance >= 0:
            raise ConfigurationError("field 'tolerance': must be non-negative")

    @property
    def pair(self):
        return f"{self.sigma_element}/{self.u_element}"

    @property
    def scheme_enum(self):
        return Scheme(self.scheme)

    def resolved_dt_rule(self):
        if self.dt_rule != "auto":
            return self.dt_rule
        return "h" if self.scheme_enum is Scheme.CRANK_NICOLSON else "h2"

    def dt(self, h):
        rule = self.resolved_dt_rule()
        if rule == "fixed":
            return self.dt_value
        factor = self.dt_value if self.dt_value is not None else DEFAULT_DT_FACTOR[rule]
        return factor * (h if rule == "h" else h * h)

    def manufactured(self):
        """Resolve ``solution`` to a manufactured solution for this problem."""
        if self.solution in CATALOG:
            ms = CATALOG[self.solution]
            if ms.problem != self.problem:
                raise ConfigurationError(
                    f"field 'solution': {self.solution!r} is a {ms.problem} solution, "
                    f"not {self.problem}"
                )
            if self.nonlinearity is not None:
                raise ConfigurationError(
                    "field 'nonlinearity': catalog solutions fix their own nonlinearity; "
                    "use an inline expression instead"
                )
            return ms
        return from_expression(self.solution, self.problem,
                               nonlinear=self.nonlinearity, lipschitz=self.lipschitz)


def _canon_element(name, fld):
    try:
        return element(str(name)).name
    except ConfigurationError as exc:
        raise ConfigurationError(f"field '{fld}': {exc}") from None


def _levels(value):
    if isinstance(value, str):
        parts = value.split("..")
        if len(parts) != 2:
            raise ConfigurationError(f"field 'levels': expected 'a..b', got {value!r}")
        value = parts
    try:
        lo, hi = (int(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"field 'levels': expected two integers, got {value!r}") from None
    if lo < 0 or hi > MAX_LEVEL:
        raise ConfigurationError(f"field 'levels': must lie in 0..{MAX_LEVEL}")
    if hi <= lo:
        raise ConfigurationError("field 'levels': need max > min for an EOC")
    return (lo, hi)


def _split_pair(text):
    parts = str(text).split("/")
    if len(parts) != 2:
        raise ConfigurationError(f"field 'pair': expected 'SIGMA/U', got {text!r}")
    return parts


def load_config(path, problem=None, overrides=None):
    """Read a YAML study file and apply ``overrides`` (``None`` values skipped)."""
    data = {}
    if path is not None:
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"invalid YAML in {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigurationError(f"{path}: top level must be a mapping")
    data = dict(data)
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    if "pair" in data:
        data["sigma_element"], data["u_element"] = _split_pair(data.pop("pair"))
    if problem is not None:
        if data.get("problem", problem) != problem:
            raise ConfigurationError(
                f"field 'problem': file says {data['problem']!r}, command is {problem!r}"
            )
        data["problem"] = problem
    if "problem" not in data:
        raise ConfigurationError("field 'problem': missing")
    known = {f.name for f in fields(StudyConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigurationError(f"unknown config field(s): {', '.join(unknown)}")
    for key in ("T", "dt_value", "lipschitz", "tolerance"):
        if data.get(key) is not None:
            try:
                data[key] = float(data[key])
            except (TypeError, ValueError):
                raise ConfigurationError(f"field '{key}': not a number: {data[key]!r}") from None
    return StudyConfig(**data)


# --------------------------------------------------------------------------
# one level of each study


def _level_setup(cfg, level):
    m = refine_uniform(unit_square_mesh(), level)
    op = assemble_mixed(build_space(m, cfg.sigma_element), build_space(m, cfg.u_element))
    return m, op, SaddleSolver(op)


def _load(ms, op):
    if ms.forcing_expr == 0:
        return None
    return LoadAssembler(ms.f, op.s_u)


def _elliptic_level(cfg, ms, m, op, ss):
    U, S = elliptic_projection(ss, ms.laplacian_u, 0.0)
    return field_errors(op, ms, U, S), {}, {}


def _parabolic_level(cfg, ms, m, op, ss):
    times = time_grid(cfg.T, cfg.dt(m.h))
    g_h, _ = elliptic_projection(ss, ms.laplacian_u, 0.0)
    la = _load(ms, op)
    if cfg.problem == "semilinear":
        traj = run_semilinear(ss, la, ms.nonlinear_term, g_h, times)
    else:
        traj = run_parabolic(ss, la, g_h, times, scheme=cfg.scheme_enum)
    err = bochner_error(traj, ms, op)
    # initial error splitting only needs the t = 0 projection
    U0, S0 = elliptic_projection(ss, ms.laplacian_u, float(times[0]))
    th0 = math.sqrt(max((traj.u[0] - U0) @ (op.A @ (traj.u[0] - U0)), 0.0))
    ep0 = math.sqrt(max((traj.sigma[0] - S0) @ (op.D @ (traj.sigma[0] - S0)), 0.0))
    errors = {"u": err.norm_u, "sigma": err.norm_sigma, "div_sigma": err.norm_div_sigma}
    extra = {"steps": traj.steps, "theta0": th0, "eps0": ep0}
    checks = {"initial_projection": th0 <= THETA0_TOL and ep0 <= EPS0_TOL}
    return errors, extra, checks


def _wave_level(cfg, ms, m, op, ss):
    times = time_grid(cfg.T, cfg.dt(m.h))
    mu0 = canonical_interpolation(op.s_u, ms.u1)
    sigma0 = canonical_interpolation(op.s_sigma, ms.grad_u0)
    traj = run_hyperbolic(ss, _load(ms, op), mu0, sigma0, times, scheme=cfg.scheme_enum)
    err = bochner_error(traj, ms, op)
    E1, _, _ = hyperbolic_error_terms(ms, op, mu0, sigma0, cfg.T)
    en = energy(op, traj)
    drift = float(np.max(np.abs(en - en[0])) / en[0]) if en[0] > 0 else float(np.max(en))
    errors = {
        "mu": err.norm_mu,
        "sigma": err.norm_sigma,
        "mu_sigma": err.norm_mu + err.norm_sigma,
        "E1": E1,
    }
    extra = {"steps": traj.steps, "energy_drift": drift}
    checks = {}
    if ms.forcing_expr == 0:
        if cfg.scheme_enum is Scheme.CRANK_NICOLSON:
            checks["energy_conserved"] = drift <= ENERGY_DRIFT_TOL
        else:
            checks["energy_dissipated"] = bool(np.all(np.diff(en) <= 1e-12 * en[0]))
    return errors, extra, checks


_LEVEL_RUNNERS = {
    "elliptic": _elliptic_level,
    "heat": _parabolic_level,
    "semilinear": _parabolic_level,
    "wave": _wave_level,
}


def run_study(cfg, write=True):
    """Run every level of a study and return its :class:`ConvergenceReport`.

    Levels run sequentially in increasing order. When ``cfg.out`` is set and
    ``write`` is true, ``<problem>_<sigma>-<u>.csv`` and ``.json`` are written
    there.
    """
    ms = cfg.manufactured()
    ut = sp.diff(ms.expr, T_SYM)
    lap_ut_zero = sp.simplify(sp.diff(ut, X, 2) + sp.diff(ut, Y, 2)) == 0
    predicted = predicted_orders(cfg.problem, cfg.sigma_element, cfg.u_element,
                                 lap_ut_zero=lap_ut_zero)
    tol = cfg.tolerance
    if tol is None:
        tol = HYPERBOLIC_EOC_TOLERANCE if cfg.problem == "wave" else EOC_TOLERANCE
    runner = _LEVEL_RUNNERS[cfg.problem]
    levels = list(range(cfg.levels[0], cfg.levels[1] + 1))
    hs, errors, extra, checks = [], {}, {}, {}
    for level in levels:
        try:
            m, op, ss = _level_setup(cfg, level)
            errs, ext, chk = runner(cfg, ms, m, op, ss)
        except SolverError as exc:
            raise SolverError(f"level {level}: {exc}") from exc
        hs.append(float(m.h))
        for k, v in errs.items():
            errors.setdefault(k, []).append(float(v))
        for k, v in ext.items():
            extra.setdefault(k, []).append(v)
        for k, v in chk.items():
            checks[k] = checks.get(k, True) and bool(v)
    report = ConvergenceReport(
        problem=cfg.problem, pair=cfg.pair, levels=levels, h=hs, errors=errors,
        predicted={k: v for k, v in predicted.items() if k in errors},
        tolerance=tol, extra=extra, checks=checks,
    )
    if write and cfg.out:
        write_report(report, cfg.out)
    return report


def report_stem(report):
    return f"{report.problem}_{report.pair.replace('/', '-')}"


def write_report(report, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    stem = report_stem(report)
    (out / f"{stem}.csv").write_text(report.to_csv())
    (out / f"{stem}.json").write_text(report.to_json() + "\n")
    return out / f"{stem}.csv", out / f"{stem}.json"


# --------------------------------------------------------------------------
# listing


def list_defaults():
    """Built-in solutions, admissible pairs and predicted orders per problem."""
    pairs = []
    for s, u in ADMISSIBLE_PAIRS:
        es = element(s)
        pairs.append({
            "pair": f"{s}/{u}",
            "r": es.r,
            "family": es.family.name.lower(),
            "predicted": {
                prob: {k: {"order": o, "branch": b}
                       for k, (o, b) in predicted_orders(prob, s, u).items()}
                for prob in PROBLEMS
            },
        })
    return {
        "solutions": {name: {"problem": ms.problem, "description": ms.description}
                      for name, ms in CATALOG.items()},
        "nonlinearities": {k: {"lipschitz": c} for k, (_, c) in NONLINEARITIES.items()},
        "pairs": pairs,
        "schemes": sorted({s.value for s in Scheme}),
        "dt_rules": list(DT_RULES),
    }


def _format_defaults(d):
    lines = ["manufactured solutions:"]
    for name, info in d["solutions"].items():
        lines.append(f"  {name:<18} {info['problem']:<10} {info['description']}")
    lines.append("nonlinearities: " + ", ".join(
        f"{k} (C={v['lipschitz']:g})" for k, v in d["nonlinearities"].items()))
    lines.append("element pairs:")
    for p in d["pairs"]:
        lines.append(f"  {p['pair']:<9} r={p['r']} family={p['family']}")
        for prob, norms in p["predicted"].items():
            rates = ", ".join(
                f"{k}: {'-' if v['order'] is None else v['order']} [{v['branch']}]"
                for k, v in norms.items())
            lines.append(f"    {prob:<10} {rates}")
    lines.append("schemes: " + ", ".join(d["schemes"]))
    return "\n".join(lines)


def _format_report(report):
    cols = report.columns()
    rows = list(report.rows())
    cells = [[c if isinstance(c, str) else (f"{c:.4e}" if isinstance(c, float) else str(c))
              for c in row] for row in rows]
    width = [max(len(c), *(len(r[j]) for r in cells)) for j, c in enumerate(cols)]
    out = [f"{report.problem} {report.pair}"]
    out.append("  ".join(c.rjust(w) for c, w in zip(cols, width)))
    out += ["  ".join(c.rjust(w) for c, w in zip(r, width)) for r in cells]
    for k, ok in report.passed.items():
        pred = report.predicted.get(k)
        what = f" (predicted {pred[0]} - {report.tolerance}, {pred[1]})" if pred else ""
        out.append(f"{'PASS' if ok else 'FAIL'} {k}{what}")
    return "\n".join(out)


# --------------------------------------------------------------------------
# entry point


def _parser():
    p = argparse.ArgumentParser(
        prog="feec-evolve",
        description="Mixed finite element convergence studies for heat, wave "
                    "and semi-linear problems.",
    )
    sub = p.add_subparsers(dest="command", required=True)
    for prob in PROBLEMS:
        sp_ = sub.add_parser(prob, help=f"run a {prob} convergence study")
        sp_.add_argument("--config", help="YAML study file")
        sp_.add_argument("--levels", help="refinement levels 'a..b'")
        sp_.add_argument("--pair", help="element pair, e.g. RT0/DG0")
        sp_.add_argument("--solution", help="catalog name or inline expression")
        sp_.add_argument("--out", help="directory for CSV and JSON reports")
        sp_.add_argument("--json", action="store_true", help="print the JSON report")
        sp_.add_argument("--tolerance", type=float, help="EOC slack")
        if prob != "elliptic":
            sp_.add_argument("--scheme", help="be or cn")
            sp_.add_argument("--T", type=float, dest="T", help="final time")
            sp_.add_argument("--dt-rule", dest="dt_rule", choices=DT_RULES)
            sp_.add_argument("--dt", type=float, dest="dt_value",
                             help="dt factor for h/h2 rules or the fixed step")
        if prob == "semilinear":
            sp_.add_argument("--nonlinearity", help="catalog name or expression in u")
            sp_.add_argument("--lipschitz", type=float, help="bound for a custom F")
    lp = sub.add_parser("list", help="list solutions, pairs and predicted orders")
    lp.add_argument("--json", action="store_true")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.command == "list":
        d = list_defaults()
        print(json.dumps(d, indent=2) if args.json else _format_defaults(d))
        return 0
    overrides = {k: v for k, v in vars(args).items()
                 if k not in ("command", "config", "json")}
    try:
        cfg = load_config(args.config, problem=args.command, overrides=overrides)
        report = run_study(cfg)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3
    print(report.to_json() if args.json else _format_report(report))
    return 0 if report.ok else 1


if __name__ == "__main__":
    sys.exit(main())
