"""Bochner-norm errors, error splitting, and convergence-order bookkeeping."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .assembly import load_vector
from .elements import Family, element
from .errors import ConfigurationError
from .quadrature import triangle_rule
from .solvers import Problem, elliptic_projection

__all__ = [
    "BochnerError",
    "ConvergenceReport",
    "spatial_l2",
    "bochner_error",
    "trapezoid_norm",
    "elliptic_projections",
    "error_decomposition",
    "splitting_residual",
    "hyperbolic_error_terms",
    "sobolev_norm",
    "compute_eoc",
    "field_errors",
    "predicted_orders",
]

ERROR_QUAD_DEGREE = 8
EOC_TOLERANCE = 0.15
HYPERBOLIC_EOC_TOLERANCE = 0.2


def spatial_l2(mesh, func, degree=ERROR_QUAD_DEGREE):
    """``||func||_{L^2}`` over the mesh; ``func`` maps (F, Q, 2) points to values."""
    pts, w = triangle_rule(degree)
    vals = np.asarray(func(mesh.map_points(pts)))
    det = np.linalg.det(mesh.jacobians)
    sq = vals**2 if vals.ndim == 2 else (vals**2).sum(axis=-1)
    return math.sqrt(max(float(np.einsum("fq,q,f->", sq, w, det)), 0.0))


class _Evaluator:
    """Cached tabulation of a space at the error quadrature points."""

    def __init__(self, space, degree=ERROR_QUAD_DEGREE):
        self.space = space
        self.pts, self.w = triangle_rule(degree)
        self.xq = space.mesh.map_points(self.pts)
        self.wdet = self.w[None, :] * np.linalg.det(space.mesh.jacobians)[:, None]
        self.vals, self.divs = space.tabulate(self.pts)

    def field(self, coeffs):
        c = np.asarray(coeffs)[self.space.cell_dofs]
        if self.space.is_vector:
            return (np.einsum("fa,faqi->fqi", c, self.vals),
                    np.einsum("fa,faq->fq", c, self.divs))
        return np.einsum("fa,faq->fq", c, self.vals), None

    def norm(self, diff):
        sq = diff**2 if diff.ndim == 2 else (diff**2).sum(axis=-1)
        return math.sqrt(max(float((sq * self.wdet).sum()), 0.0))


def field_errors(op, ms, U, S, t=0.0, degree=ERROR_QUAD_DEGREE):
    """L^2 errors of a single discrete state ``(U, S)`` against ``u(., t)``."""
    eu, es = _Evaluator(op.s_u, degree), _Evaluator(op.s_sigma, degree)
    sh, dsh = es.field(S)
    return {
        "u": eu.norm(eu.field(U)[0] - ms.u(eu.xq, t)),
        "sigma": es.norm(sh - ms.grad_u(es.xq, t)),
        "div_sigma": es.norm(dsh - ms.laplacian_u(es.xq, t)),
    }


@dataclass
class BochnerError:
    """``L^2(I, L^2)`` errors of one run. ``None`` marks a norm not measured."""

    norm_u: float | None = None
    norm_sigma: float | None = None
    norm_div_sigma: float | None = None
    norm_mu: float | None = None
    time_rule: str = "trapezoid"

    def as_dict(self):
        return {k: v for k, v in asdict(self).items() if k != "time_rule" and v is not None}


def trapezoid_norm(times, values):
    """``sqrt(int ||e(t)||^2 dt)`` from per-node spatial norms by the trapezoid rule."""
    v = np.asarray(values, dtype=float) ** 2
    return math.sqrt(float(np.trapezoid(v, np.asarray(times))))


def bochner_error(traj, ms, op, degree=ERROR_QUAD_DEGREE, per_node=False):
    """Bochner errors of a trajectory against a manufactured solution.

    Parabolic/semi-linear runs measure ``u``, ``sigma = grad u`` and
    ``div sigma = Laplacian u``; hyperbolic runs measure ``mu = u_t`` and
    ``sigma``, plus ``div sigma``.
    """
    s_u, s_sigma = op.s_u, op.s_sigma
    if traj.u.shape[1] != s_u.dof_count or traj.sigma.shape[1] != s_sigma.dof_count:
        raise ConfigurationError("trajectory does not match the spaces")
    eu, es = _Evaluator(s_u, degree), _Evaluator(s_sigma, degree)
    hyper = traj.problem is Problem.HYPERBOLIC
    scalar_exact = ms.u_t if hyper else ms.u
    nodes = {"u": [], "sigma": [], "div_sigma": []}
    for t, U, S in zip(traj.times, traj.u, traj.sigma):
        uh, _ = eu.field(U)
        sh, dsh = es.field(S)
        nodes["u"].append(eu.norm(uh - scalar_exact(eu.xq, t)))
        nodes["sigma"].append(es.norm(sh - ms.grad_u(es.xq, t)))
        nodes["div_sigma"].append(es.norm(dsh - ms.laplacian_u(es.xq, t)))
    integ = {k: trapezoid_norm(traj.times, v) for k, v in nodes.items()}
    err = BochnerError(
        norm_u=None if hyper else integ["u"],
        norm_mu=integ["u"] if hyper else None,
        norm_sigma=integ["sigma"],
        norm_div_sigma=integ["div_sigma"],
    )
    if per_node:
        return err, {k: np.array(v) for k, v in nodes.items()}
    return err


def elliptic_projections(traj, ms, ss, degree=None):
    """Elliptic projections ``(u~_h(t_i), sigma~_h(t_i))`` at every node."""
    Ut = np.empty_like(traj.u)
    St = np.empty_like(traj.sigma)
    for i, t in enumerate(traj.times):
        Ut[i], St[i] = elliptic_projection(ss, ms.laplacian_u, t, degree=degree)
    return Ut, St


def error_decomposition(traj, ms, ss, projections=None, degree=ERROR_QUAD_DEGREE):
    """Per-node ``(||rho||, ||theta||, ||eps||)``.

    ``rho = u~_h - u`` (L^2 by quadrature), ``theta = u_h - u~_h`` and
    ``eps = sigma_h - sigma~_h`` (discrete L^2 norms through A and D).
    """
    op = ss.op
    Ut, St = projections if projections is not None else elliptic_projections(traj, ms, ss)
    ev = _Evaluator(op.s_u, degree)
    rho = np.array([ev.norm(ev.field(Ut[i])[0] - ms.u(ev.xq, t))
                    for i, t in enumerate(traj.times)])
    th = traj.u - Ut
    ep = traj.sigma - St
    theta = np.sqrt(np.maximum(np.einsum("ij,ij->i", th, (op.A @ th.T).T), 0.0))
    eps = np.sqrt(np.maximum(np.einsum("ij,ij->i", ep, (op.D @ ep.T).T), 0.0))
    return rho, theta, eps


def splitting_residual(traj, ms, ss, projections=None):
    """Residual of the discrete error equations at nodes 1..M.

    Time derivatives are replaced by backward differences::

        R_i = A (theta^i - theta^{i-1})/dt - B eps^i
              + [A (u~^i - u~^{i-1})/dt - ((u(t_i) - u(t_{i-1}))/dt, phi)]

    and measured in the dual norm ``sqrt(R^T A^{-1} R)``. For backward
    Euler this is the first-order time truncation error; it vanishes for
    the time-continuous system.
    """
    op = ss.op
    Ut, St = projections if projections is not None else elliptic_projections(traj, ms, ss)
    th = traj.u - Ut
    ep = traj.sigma - St
    out = []
    prev_u = load_vector(op.s_u, lambda x: ms.u(x, traj.times[0]))
    for i in range(1, len(traj.times)):
        dt = traj.times[i] - traj.times[i - 1]
        cur_u = load_vector(op.s_u, lambda x, t=traj.times[i]: ms.u(x, t))
        R = (op.A @ (th[i] - th[i - 1])) / dt - op.B @ ep[i]
        R += (op.A @ (Ut[i] - Ut[i - 1])) / dt - (cur_u - prev_u) / dt
        out.append(math.sqrt(max(R @ (ss.A_inv @ R), 0.0)))
        prev_u = cur_u
    return np.array(out)


# --------------------------------------------------------------------------
# Sobolev norms and the wave estimate terms


def _fd_partials(func, order, step=1e-3):
    """Central-difference partials of exact total order (user callables).

    Stencil: tensor product of the 1D central difference of order ``a`` in
    x and ``order - a`` in y with spacing ``step``; O(step^2) accurate.
    """
    from math import comb

    def d1(k):
        # coefficients of the k-th central difference on offsets -k..k step 2
        return [((-1) ** j * comb(k, j), (k / 2 - j)) for j in range(k + 1)]

    out = []
    for a in range(order + 1):
        b = order - a

        def partial(p, t=0.0, a=a, b=b):
            p = np.asarray(p, dtype=float)
            acc = 0.0
            for cx, ox in d1(a):
                for cy, oy in d1(b):
                    shift = np.array([ox * step, oy * step])
                    acc = acc + cx * cy * np.asarray(func(p + shift, t))
            return acc / step ** (a + b)

        out.append(partial)
    return out


def sobolev_norm(mesh, partials_by_order, t=0.0, degree=ERROR_QUAD_DEGREE):
    """``||v||_{H^s}`` from callables of each derivative order 0..s.

    ``partials_by_order[k]`` lists all partial derivatives of order ``k``
    (scalar callables ``(points, t)``; vector fields list each component).
    """
    pts, w = triangle_rule(degree)
    xq = mesh.map_points(pts)
    wdet = w[None, :] * np.linalg.det(mesh.jacobians)[:, None]
    total = 0.0
    for fns in partials_by_order:
        for fn in fns:
            total += float((np.asarray(fn(xq, t)) ** 2 * wdet).sum())
    return math.sqrt(total)


def _hs(ms, mesh, which, s, t, degree):
    orders = []
    for k in range(s + 1):
        if hasattr(ms, "partials"):
            orders.append(ms.partials(which, k))
        else:
            orders.append(_fd_partials(getattr(ms, which), k))
    return sobolev_norm(mesh, orders, t, degree)


def hyperbolic_error_terms(ms, op, mu0, sigma0, T, s=0, degree=ERROR_QUAD_DEGREE,
                           time_points=40):
    """Terms of the velocity-stress estimate.

    E1 = ||u_1 - u_{1,h}|| + ||grad u_0 - (grad u_0)_h||   (initial data)
    E2 = ||u_1||_{H^s} + ||grad u_0||_{H^s}                 (data regularity)
    E3 = ||u_t||_{L^2(I,H^s)} + ||sigma||_{L^2(I,H^s)}      (solution regularity)

    E3 uses Gauss-Legendre in time with ``time_points`` nodes.
    """
    mesh = op.s_u.mesh
    eu, es = _Evaluator(op.s_u, degree), _Evaluator(op.s_sigma, degree)
    E1 = eu.norm(eu.field(mu0)[0] - ms.u_t(eu.xq, 0.0)) + es.norm(
        es.field(sigma0)[0] - ms.grad_u(es.xq, 0.0)
    )
    E2 = _hs(ms, mesh, "u_t", s, 0.0, degree) + _hs(ms, mesh, "grad_u", s, 0.0, degree)
    z, wz = np.polynomial.legendre.leggauss(time_points)
    tq, wt = 0.5 * T * (z + 1), 0.5 * T * wz
    ut2 = sum(w * _hs(ms, mesh, "u_t", s, t, degree) ** 2 for t, w in zip(tq, wt))
    sg2 = sum(w * _hs(ms, mesh, "grad_u", s, t, degree) ** 2 for t, w in zip(tq, wt))
    E3 = math.sqrt(ut2) + math.sqrt(sg2)
    return E1, E2, E3


# --------------------------------------------------------------------------
# convergence orders


def _order(value, branch):
    # a bound with no positive power of h is reported but not judged
    return (value if value > 0 else None, branch)


def predicted_orders(problem, sigma_element, u_element, lap_ut_zero=False):
    """Predicted EOC and estimate branch for each norm of a study.

    The rates take the largest Sobolev index ``s`` each branch admits, which
    is attained by the smooth built-in solutions. ``lap_ut_zero`` selects
    the branch in which the Laplacian of ``u_t`` vanishes, removing the
    ``h ||Delta u_t||`` term from the flux bound.
    """
    es, eu = element(sigma_element), element(u_element)
    r = eu.r
    if es.r != r:
        raise ConfigurationError(f"{sigma_element}/{u_element} is not an admissible pair")
    full = es.family is Family.FULL
    fam = "full" if full else "trimmed"
    if problem == "elliptic":
        return {
            "u": _order(r + 1, f"elliptic r={r}"),
            "sigma": _order(r + 2 if full else r + 1, f"elliptic r={r} {fam}"),
            "div_sigma": _order(r + 1, f"elliptic r={r}"),
        }
    if problem == "wave":
        return {
            "mu": (None, "reported"),
            "sigma": (None, "reported"),
            "mu_sigma": _order(r + 1, f"velocity-stress r={r}, s={r + 1}"),
            "E1": _order(r + 1, f"initial interpolation r={r}"),
        }
    if problem not in ("heat", "semilinear"):
        raise ConfigurationError(f"unknown problem {problem!r}")
    if r == 0:
        if full and lap_ut_zero:
            sigma = _order(2, "r=0 full, s=1, Delta u_t = 0")
        else:
            sigma = _order(1, f"r=0 {fam}")
        return {
            "u": _order(1, "r=0"),
            "sigma": sigma,
            "div_sigma": _order(1, "r=0, s=1"),
        }
    # r > 0 with s <= r - 1
    u_rate = r + 1 if problem == "heat" else r
    return {
        "u": _order(u_rate, f"r={r}, s={r - 1}"),
        "sigma": _order(r, f"r={r}, s={r - 1}"),
        "div_sigma": _order(r - 1, f"r={r}, s={r - 1}"),
    }


def compute_eoc(errors):
    """Orders ``log(e_L / e_{L+1}) / log(h_L / h_{L+1})`` between levels.

    ``errors`` is a list of ``(h, value)``. A pair involving a zero error
    yields ``None`` (reported as "exact").
    """
    if len(errors) < 2:
        raise ValueError("need at least two levels")
    out = []
    for (h0, e0), (h1, e1) in zip(errors, errors[1:]):
        if e0 < 0 or e1 < 0:
            raise ValueError("errors must be non-negative")
        if e0 == 0.0 or e1 == 0.0:
            out.append(None)
        else:
            out.append(math.log(e0 / e1) / math.log(h0 / h1))
    return out


def _cell(v):
    # repr of a Python float round-trips exactly; numpy scalars are normalized first
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


@dataclass
class ConvergenceReport:
    """Errors per mesh level with EOCs and pass/fail against predicted orders.

    ``predicted`` maps norm name to ``(order, branch)``; norms whose
    predicted order is ``None`` are reported but not judged. A norm passes
    when every EOC is ``None`` ("exact") or at least ``order - tolerance``.
    """

    problem: str
    pair: str
    levels: list
    h: list
    errors: dict
    predicted: dict
    tolerance: float
    extra: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)

    @property
    def eoc(self):
        return {k: compute_eoc(list(zip(self.h, v))) for k, v in self.errors.items()}

    @property
    def passed(self):
        out = {}
        for k, orders in self.eoc.items():
            order = self.predicted.get(k, (None, ""))[0]
            if order is None:
                continue
            out[k] = all(o is None or o >= order - self.tolerance for o in orders)
        out.update(self.checks)
        return out

    @property
    def ok(self):
        return all(self.passed.values())

    def columns(self):
        names = list(self.errors)
        cols = ["level", "h"] + names + [f"eoc_{n}" for n in names] + list(self.extra)
        return cols

    def rows(self):
        eoc = self.eoc
        for j, (lev, h) in enumerate(zip(self.levels, self.h)):
            row = [lev, h]
            row += [self.errors[n][j] for n in self.errors]
            for n in self.errors:
                if j == 0:
                    row.append("")
                else:
                    o = eoc[n][j - 1]
                    row.append("exact" if o is None else o)
            row += [self.extra[n][j] for n in self.extra]
            yield row

    def to_csv(self):
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(self.columns())
        for row in self.rows():
            wr.writerow([_cell(v) for v in row])
        return buf.getvalue()

    def to_json(self):
        return json.dumps(
            {
                "problem": self.problem,
                "pair": self.pair,
                "levels": self.levels,
                "h": self.h,
                "errors": self.errors,
                "eoc": self.eoc,
                "predicted": {k: {"order": o, "branch": b}
                              for k, (o, b) in self.predicted.items()},
                "tolerance": self.tolerance,
                "extra": self.extra,
                "passed": self.passed,
                "ok": self.ok,
            },
            indent=2,
        )
