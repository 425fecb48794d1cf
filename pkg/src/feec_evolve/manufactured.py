"""Manufactured solutions on the unit square.

Solutions are sympy expressions in ``x``, ``y``, ``t``; every derivative
used by the solvers and error norms (``u_t``, ``grad u``, ``Laplacian u``,
higher partials for Sobolev norms) is formed symbolically and compiled
with ``lambdify``. All compiled callables take points of shape (..., 2)
and a time ``t`` and return arrays of shape (...) or (..., 2).

Inline expressions accept the grammar::

    expr := number | x | y | t | pi | expr (+ - * / **) expr
          | sin(expr) | cos(expr) | exp(expr) | (expr)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import sympy as sp
from sympy.parsing.sympy_parser import parse_expr

from .errors import ConfigurationError
from .solvers import NonlinearTerm

__all__ = [
    "ManufacturedSolution",
    "PROBLEMS",
    "CATALOG",
    "NONLINEARITIES",
    "manufactured",
    "from_expression",
    "nonlinearity",
]

X, Y, T = sp.symbols("x y t", real=True)
U = sp.Symbol("u", real=True)
PROBLEMS = ("elliptic", "heat", "wave", "semilinear")

_ALLOWED_FUNCS = {"sin": sp.sin, "cos": sp.cos, "exp": sp.exp}
_NAMESPACE = {"x": X, "y": Y, "t": T, "u": U, "pi": sp.pi, **_ALLOWED_FUNCS}


def _parse(text, symbols):
    try:
        expr = parse_expr(text, local_dict=dict(_NAMESPACE), global_dict={
            "Integer": sp.Integer, "Float": sp.Float, "Rational": sp.Rational,
            "Symbol": sp.Symbol,
        })
    except Exception as exc:
        raise ConfigurationError(f"cannot parse expression {text!r}: {exc}") from None
    expr = sp.sympify(expr)
    extra = expr.free_symbols - set(symbols)
    if extra:
        raise ConfigurationError(
            f"expression {text!r} uses unknown symbols {sorted(map(str, extra))}"
        )
    for fn in expr.atoms(sp.Function):
        if fn.func not in _ALLOWED_FUNCS.values():
            raise ConfigurationError(f"function {fn.func} not allowed in {text!r}")
    return expr


def _compile(expr):
    fn = sp.lambdify((X, Y, T), expr, modules="numpy")

    def call(p, t=0.0):
        p = np.asarray(p, dtype=float)
        out = fn(p[..., 0], p[..., 1], t)
        return np.broadcast_to(np.asarray(out, dtype=float), p.shape[:-1])

    call.expr = expr
    return call


def _compile_vec(ex, ey):
    fx, fy = _compile(ex), _compile(ey)

    def call(p, t=0.0):
        return np.stack([fx(p, t), fy(p, t)], axis=-1)

    call.expr = (ex, ey)
    return call


# name -> (expression in u, Lipschitz bound)
NONLINEARITIES = {
    "zero": (sp.Integer(0), 0.0),
    "sin": (sp.sin(U), 1.0),
    "linear": (U, 1.0),
}


def nonlinearity(which, lipschitz=None):
    """Build a :class:`NonlinearTerm` from a catalog name or an expression in ``u``."""
    if which in NONLINEARITIES:
        expr, C = NONLINEARITIES[which]
        name = which
    else:
        expr = _parse(which, {U})
        if lipschitz is None:
            raise ConfigurationError(
                f"custom nonlinearity {which!r} needs a declared Lipschitz bound"
            )
        C, name = lipschitz, which
    fn = sp.lambdify(U, expr, modules="numpy")
    return NonlinearTerm(
        F=lambda u: np.broadcast_to(np.asarray(fn(u), dtype=float), np.shape(u)),
        lipschitz_bound=float(C if lipschitz is None else lipschitz),
        name=name,
    )


@dataclass(frozen=True, eq=False)
class ManufacturedSolution:
    """Exact solution ``u(x, t)`` with derived data for one problem type."""

    name: str
    problem: str
    expr: sp.Expr
    nonlinear_expr: sp.Expr = field(default=None)
    lipschitz: float = 0.0
    description: str = ""

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ConfigurationError(f"unknown problem {self.problem!r}")
        if self.problem == "elliptic" and T in self.expr.free_symbols:
            raise ConfigurationError("elliptic solutions must not depend on t")

    # symbolic pieces
    @cached_property
    def _lap(self):
        return sp.diff(self.expr, X, 2) + sp.diff(self.expr, Y, 2)

    @cached_property
    def forcing_expr(self):
        u = self.expr
        if self.problem == "elliptic":
            return sp.simplify(-self._lap)
        if self.problem == "heat":
            return sp.diff(u, T) - self._lap
        if self.problem == "wave":
            return sp.diff(u, T, 2) - self._lap
        F = self.nonlinear_expr if self.nonlinear_expr is not None else sp.Integer(0)
        return sp.diff(u, T) - self._lap + F.subs(U, u)

    # compiled callables
    @cached_property
    def u(self):
        return _compile(self.expr)

    @cached_property
    def u_t(self):
        return _compile(sp.diff(self.expr, T))

    @cached_property
    def u_tt(self):
        return _compile(sp.diff(self.expr, T, 2))

    @cached_property
    def grad_u(self):
        """The flux variable ``sigma = grad u``."""
        return _compile_vec(sp.diff(self.expr, X), sp.diff(self.expr, Y))

    @cached_property
    def grad_u_t(self):
        return _compile_vec(sp.diff(self.expr, X, T), sp.diff(self.expr, Y, T))

    @cached_property
    def laplacian_u(self):
        return _compile(self._lap)

    @cached_property
    def laplacian_u_t(self):
        return _compile(sp.diff(self._lap, T))

    @cached_property
    def f(self):
        return _compile(self.forcing_expr)

    @property
    def g(self):
        """Parabolic initial value ``u(., 0)``."""
        return lambda p: self.u(p, 0.0)

    @property
    def u0(self):
        return self.g

    @property
    def u1(self):
        """Initial velocity ``u_t(., 0)``."""
        return lambda p: self.u_t(p, 0.0)

    @property
    def grad_u0(self):
        return lambda p: self.grad_u(p, 0.0)

    @cached_property
    def nonlinear_term(self):
        if self.problem != "semilinear":
            return None
        expr = self.nonlinear_expr if self.nonlinear_expr is not None else sp.Integer(0)
        fn = sp.lambdify(U, expr, modules="numpy")
        return NonlinearTerm(
            F=lambda u: np.broadcast_to(np.asarray(fn(u), dtype=float), np.shape(u)),
            lipschitz_bound=self.lipschitz,
            name=str(expr),
        )

    def partials(self, which, order):
        """Compiled partial derivatives of exact order ``order``.

        ``which`` is ``"u"``, ``"u_t"`` or ``"grad_u"``; for ``grad_u`` both
        components are returned. Returns a list of callables (p, t).
        """
        base = {
            "u": [self.expr],
            "u_t": [sp.diff(self.expr, T)],
            "grad_u": [sp.diff(self.expr, X), sp.diff(self.expr, Y)],
        }[which]
        out = []
        for comp in base:
            for a in range(order + 1):
                e = comp
                if a:
                    e = sp.diff(e, X, a)
                if order - a:
                    e = sp.diff(e, Y, order - a)
                out.append(_compile(e))
        return out

    def check_consistency(self, samples=20, seed=0, fd_step=1e-4):
        """Cross-check supplied data at random points.

        Returns the largest deviation of each check; raises ``ValueError`` if
        the PDE residual exceeds 1e-10, a finite-difference derivative check
        exceeds 1e-5 (relative), or ``u`` is nonzero on the boundary.
        """
        rng = np.random.default_rng(seed)
        p = rng.uniform(0.05, 0.95, size=(samples, 2))
        ts = rng.uniform(0.0, 1.0, size=samples)
        h = fd_step
        ex, ey = np.array([h, 0.0]), np.array([0.0, h])
        res = []
        fd_t, fd_lap, fd_grad = [], [], []
        for q, t in zip(p, ts):
            u = self.u(q, t)
            ut, utt = self.u_t(q, t), self.u_tt(q, t)
            lap = self.laplacian_u(q, t)
            if self.problem == "elliptic":
                pde = -lap
            elif self.problem == "heat":
                pde = ut - lap
            elif self.problem == "wave":
                pde = utt - lap
            else:
                pde = ut - lap + self.nonlinear_term(np.asarray(u))
            res.append(abs(self.f(q, t) - pde))
            fd_t.append(abs((self.u(q, t + h) - self.u(q, t - h)) / (2 * h) - ut))
            lap_fd = (
                self.u(q + ex, t) + self.u(q - ex, t) + self.u(q + ey, t)
                + self.u(q - ey, t) - 4 * u
            ) / h**2
            fd_lap.append(abs(lap_fd - lap) / max(1.0, abs(lap)))
            gfd = np.array([
                (self.u(q + ex, t) - self.u(q - ex, t)) / (2 * h),
                (self.u(q + ey, t) - self.u(q - ey, t)) / (2 * h),
            ])
            fd_grad.append(np.abs(gfd - self.grad_u(q, t)).max())
        s = rng.uniform(0.0, 1.0, samples)
        edge_pts = np.concatenate([
            np.column_stack([s, 0 * s]), np.column_stack([s, 1 + 0 * s]),
            np.column_stack([0 * s, s]), np.column_stack([1 + 0 * s, s]),
        ])
        bnd = max(abs(self.u(q, t)).max() for q, t in zip(edge_pts, np.tile(ts, 4)))
        report = {
            "pde_residual": float(max(res)),
            "fd_time": float(max(fd_t)),
            "fd_laplacian": float(max(fd_lap)),
            "fd_gradient": float(max(fd_grad)),
            "boundary": float(bnd),
        }
        scale = 1 + max(abs(self.f(q, t)) for q, t in zip(p, ts))
        if report["pde_residual"] > 1e-10 * scale:
            raise ValueError(f"{self.name}: forcing inconsistent with u ({report})")
        if max(report["fd_time"], report["fd_gradient"], report["fd_laplacian"]) > 1e-5 * scale:
            raise ValueError(f"{self.name}: derivative cross-check failed ({report})")
        if report["boundary"] > 1e-12:
            raise ValueError(f"{self.name}: u does not vanish on the boundary ({report})")
        return report


def from_expression(text, problem, name=None, nonlinear=None, lipschitz=None):
    """Manufactured solution from an inline expression in ``x, y, t``."""
    expr = _parse(text, {X, Y, T})
    nl_expr, C = None, 0.0
    if problem == "semilinear":
        which = nonlinear or "zero"
        if which in NONLINEARITIES:
            nl_expr, C = NONLINEARITIES[which]
        else:
            if lipschitz is None:
                raise ConfigurationError("custom nonlinearity needs a Lipschitz bound")
            nl_expr, C = _parse(which, {U}), float(lipschitz)
    return ManufacturedSolution(
        name=name or text, problem=problem, expr=expr, nonlinear_expr=nl_expr,
        lipschitz=C, description=f"u = {text}",
    )


_SINSIN = sp.sin(sp.pi * X) * sp.sin(sp.pi * Y)

CATALOG = {
    "elliptic-sine": ManufacturedSolution(
        "elliptic-sine", "elliptic", _SINSIN, description="u = sin(pi x) sin(pi y)"),
    "elliptic-zero": ManufacturedSolution(
        "elliptic-zero", "elliptic", sp.Integer(0), description="u = 0 (zero load)"),
    "heat-separable": ManufacturedSolution(
        "heat-separable", "heat", sp.exp(-T) * _SINSIN,
        description="u = exp(-t) sin(pi x) sin(pi y)"),
    "heat-steady": ManufacturedSolution(
        "heat-steady", "heat", _SINSIN,
        description="u = sin(pi x) sin(pi y), time independent (Laplacian u_t = 0)"),
    "wave-standing": ManufacturedSolution(
        "wave-standing", "wave", sp.cos(sp.sqrt(2) * sp.pi * T) * _SINSIN,
        description="u = cos(sqrt(2) pi t) sin(pi x) sin(pi y), f = 0"),
    "semilinear-sin": ManufacturedSolution(
        "semilinear-sin", "semilinear", sp.exp(-T) * _SINSIN,
        nonlinear_expr=sp.sin(U), lipschitz=1.0,
        description="u = exp(-t) sin(pi x) sin(pi y), F(u) = sin(u)"),
    "semilinear-linear": ManufacturedSolution(
        "semilinear-linear", "semilinear", sp.exp(-T) * _SINSIN,
        nonlinear_expr=U, lipschitz=1.0,
        description="u = exp(-t) sin(pi x) sin(pi y), F(u) = u"),
}


def manufactured(name):
    try:
        return CATALOG[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown manufactured solution {name!r}; choose from {', '.join(CATALOG)}"
        ) from None
