"""Linear solves and time stepping for the mixed heat, wave and semi-linear problems.

Every implicit step reduces to one coupled system

    A X - a B Y = r
    a B^T X + D Y = g

which is solved through the SPD Schur complement ``D + a^2 B^T A^{-1} B``
(``A`` is block diagonal for discontinuous n-form spaces, so ``A^{-1}`` is
exact and sparse). With ``a = k`` this is the velocity-stress reduction
``(D + k^2 B^T A^{-1} B) Sigma = G``; the heat step uses ``a = sqrt(dt)``
and ``Y = sqrt(dt) Sigma``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sps

from .elements import evaluate_field
from .errors import SolverError, StepError
from .linalg import SaddleFactor, SPDFactor, block_diagonal_inverse, check_residual
from .quadrature import triangle_rule

__all__ = [
    "Scheme",
    "Problem",
    "Trajectory",
    "NonlinearTerm",
    "SaddleSolver",
    "time_grid",
    "solve_elliptic_mixed",
    "elliptic_projection",
    "step_parabolic",
    "step_hyperbolic",
    "step_semilinear",
    "run_parabolic",
    "run_hyperbolic",
    "run_semilinear",
    "energy",
    "nonlinear_load",
]

DEFAULT_TOL = 1e-10
FIXED_POINT_TOL = 1e-10
FIXED_POINT_MAXITER = 50


class Scheme(enum.Enum):
    BACKWARD_EULER = "be"
    CRANK_NICOLSON = "cn"


class Problem(enum.Enum):
    PARABOLIC = "parabolic"
    HYPERBOLIC = "hyperbolic"
    SEMILINEAR = "semilinear"


@dataclass(eq=False)
class Trajectory:
    """Coefficient vectors on a time grid.

    ``u`` holds the n-form unknown (``u_h`` for parabolic runs, the velocity
    ``mu_h`` for hyperbolic runs), ``sigma`` the (n-1)-form unknown. Row
    ``i`` belongs to ``times[i]``.
    """

    times: np.ndarray
    u: np.ndarray
    sigma: np.ndarray
    scheme: Scheme
    problem: Problem

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1 or len(self.times) < 2:
            raise ValueError("need at least two time nodes")
        if self.times[0] != 0.0 or np.any(np.diff(self.times) <= 0):
            raise ValueError("times must start at 0 and increase strictly")
        if len(self.u) != len(self.times) or len(self.sigma) != len(self.times):
            raise ValueError("one coefficient vector per time node required")

    @classmethod
    def empty(cls, times, n_u, n_sigma, scheme, problem):
        M = len(times)
        return cls(times, np.zeros((M, n_u)), np.zeros((M, n_sigma)), scheme, problem)

    @property
    def T(self):
        return float(self.times[-1])

    @property
    def steps(self):
        return len(self.times) - 1


@dataclass(frozen=True)
class NonlinearTerm:
    """Pointwise nonlinearity ``F`` with a declared Lipschitz bound ``C``."""

    F: Callable
    lipschitz_bound: float
    name: str = "F"

    def __call__(self, u):
        return self.F(u)

    def empirical_lipschitz(self, lo, hi, samples=2000, seed=0):
        """Largest difference quotient over random pairs in ``[lo, hi]``."""
        rng = np.random.default_rng(seed)
        a = rng.uniform(lo, hi, samples)
        b = rng.uniform(lo, hi, samples)
        keep = a != b
        a, b = a[keep], b[keep]
        return float(np.max(np.abs(self.F(a) - self.F(b)) / np.abs(a - b)))

    def check_lipschitz(self, lo, hi, samples=2000, seed=0):
        q = self.empirical_lipschitz(lo, hi, samples, seed)
        if q > self.lipschitz_bound * (1 + 1e-12):
            raise ValueError(
                f"{self.name}: observed Lipschitz quotient {q:.6g} exceeds "
                f"declared bound {self.lipschitz_bound:.6g}"
            )
        return q


def time_grid(T, dt):
    """Uniform grid on [0, T] with the largest step not exceeding ``dt``."""
    if not T > 0:
        raise ValueError("T must be positive")
    M = max(1, math.ceil(T / dt - 1e-9))
    return np.linspace(0.0, T, M + 1)


class SaddleSolver:
    """Factorization cache around a :class:`~feec_evolve.assembly.MixedOperator`.

    Not safe for concurrent mutation; replacing ``op`` drops all cached
    factorizations.
    """

    def __init__(self, op, tol=DEFAULT_TOL):
        self.tol = tol
        self.op = op

    @property
    def op(self):
        return self._op

    @op.setter
    def op(self, op):
        self._op = op
        self._schur = {}
        self._A_inv = None
        self._D = None
        self._saddle = None
        self._loads = {}

    @property
    def A_inv(self):
        if self._A_inv is None:
            self._A_inv = block_diagonal_inverse(self.op.A, self.op.s_u.cell_dofs)
        return self._A_inv

    def schur(self, a2):
        """SPD factor of ``D + a2 B^T A^{-1} B``, cached by ``a2``."""
        if a2 not in self._schur:
            op = self.op
            S = (op.D + a2 * (op.B.T @ self.A_inv @ op.B)).tocsc()
            S = 0.5 * (S + S.T)
            self._schur[a2] = SPDFactor(S, name=f"D + {a2:.3g} B^T A^-1 B")
        return self._schur[a2]

    def D_factor(self):
        if self._D is None:
            self._D = SPDFactor(self.op.D, name="D")
        return self._D

    def solve_coupled(self, a, r, g=None):
        """Solve ``A X - a B Y = r``, ``a B^T X + D Y = g`` for (X, Y)."""
        op = self.op
        if g is None:
            g = np.zeros(op.D.shape[0])
        Ainv_r = self.A_inv @ r
        rhs = g - a * (op.B.T @ Ainv_r)
        fac = self.schur(a * a)
        Y = fac.solve(rhs)
        check_residual(fac.matrix, Y, rhs, self.tol, what="Schur solve")
        X = Ainv_r + a * (self.A_inv @ (op.B @ Y))
        r1 = op.A @ X - a * (op.B @ Y) - r
        r2 = a * (op.B.T @ X) + op.D @ Y - g
        scale = math.hypot(np.linalg.norm(r), np.linalg.norm(g))
        res = math.hypot(np.linalg.norm(r1), np.linalg.norm(r2))
        if scale == 0.0:
            if np.any(X) or np.any(Y):
                raise SolverError("nonzero solution for zero data")
        elif res > self.tol * scale:
            raise SolverError(f"block residual {res / scale:.3e} exceeds {self.tol:.1e}")
        return X, Y

    def solve_elliptic(self, load):
        """Mixed Poisson: ``-B Sigma = load``, ``B^T U + D Sigma = 0``."""
        op = self.op
        load = np.asarray(load, dtype=float)
        if load.shape != (op.A.shape[0],):
            raise ValueError(f"load must have length {op.A.shape[0]}")
        nS = op.D.shape[0]
        if self._saddle is None:
            K = sps.bmat([[op.D, op.B.T], [op.B, None]], format="csc")
            self._saddle = SaddleFactor(K, name="mixed Poisson system")
        rhs = np.concatenate([np.zeros(nS), -load])
        if not np.any(rhs):
            return np.zeros(op.A.shape[0]), np.zeros(nS)
        x = self._saddle.solve(rhs)
        try:
            check_residual(self._saddle.matrix, x, rhs, self.tol, what="elliptic solve")
        except SolverError:
            # one step of iterative refinement before giving up
            x += self._saddle.solve(rhs - self._saddle.matrix @ x)
            check_residual(self._saddle.matrix, x, rhs, self.tol, what="elliptic solve")
        if not np.all(np.isfinite(x)):
            raise SolverError("singular Schur complement: div kernel not trivial?")
        return x[nS:], x[:nS]

    def load(self, la, t):
        """Load vector at time ``t``; keeps the two most recent evaluations."""
        if la is None:
            return np.zeros(self.op.A.shape[0])
        key = (id(la), float(t))
        if key not in self._loads:
            if len(self._loads) >= 2:
                self._loads.pop(next(iter(self._loads)))
            self._loads[key] = la(t)
        return self._loads[key]


def solve_elliptic_mixed(ss, load):
    """Return ``(u_coeffs, sigma_coeffs)`` of the discrete mixed Poisson problem."""
    return ss.solve_elliptic(load)


def elliptic_projection(ss, laplacian, t0=0.0, degree=None):
    """Time-ignorant elliptic projection at ``t0``.

    ``laplacian(x, t)`` is the exact Laplacian of the continuous solution;
    the load is ``(-laplacian(., t0), phi_i)``.
    """
    from .assembly import load_vector

    load = load_vector(ss.op.s_u, lambda x: -laplacian(x, t0), degree=degree)
    return ss.solve_elliptic(load)


# --------------------------------------------------------------------------
# time steps


def _dt(traj, i):
    if not 1 <= i <= traj.steps:
        raise StepError(f"step index out of range 1..{traj.steps}", step=i)
    return traj.times[i] - traj.times[i - 1]


def step_parabolic(ss, la, traj, i, extra_load=None):
    """Advance ``A U_t + B D^{-1} B^T U = F`` from node ``i-1`` to ``i``.

    ``extra_load`` is added to ``F(t_i)`` (backward Euler only); the
    semi-linear step uses it for ``-(F(u_h), phi)``.
    """
    dt = _dt(traj, i)
    op = ss.op
    try:
        if traj.scheme is Scheme.BACKWARD_EULER:
            F = ss.load(la, traj.times[i])
            if extra_load is not None:
                F = F + extra_load
            r = op.A @ traj.u[i - 1] + dt * F
            a = math.sqrt(dt)
        else:
            F = 0.5 * (ss.load(la, traj.times[i]) + ss.load(la, traj.times[i - 1]))
            r = op.A @ traj.u[i - 1] + 0.5 * dt * (op.B @ traj.sigma[i - 1]) + dt * F
            a = math.sqrt(0.5 * dt)
        X, Y = ss.solve_coupled(a, r)
    except StepError:
        raise
    except SolverError as exc:
        raise StepError(str(exc), step=i) from exc
    traj.u[i] = X
    traj.sigma[i] = Y / a
    return traj


def step_hyperbolic(ss, la, traj, i):
    """Advance the velocity-stress system ``A W_t - B S = F``, ``B^T W + D S_t = 0``."""
    k = _dt(traj, i)
    op = ss.op
    W0, S0 = traj.u[i - 1], traj.sigma[i - 1]
    try:
        if traj.scheme is Scheme.BACKWARD_EULER:
            r = op.A @ W0 + k * ss.load(la, traj.times[i])
            g = op.D @ S0
            a = k
        else:
            a = 0.5 * k
            F = ss.load(la, traj.times[i]) + ss.load(la, traj.times[i - 1])
            r = op.A @ W0 + a * (op.B @ S0) + a * F
            g = op.D @ S0 - a * (op.B.T @ W0)
        W, S = ss.solve_coupled(a, r, g)
    except SolverError as exc:
        raise StepError(str(exc), step=i) from exc
    traj.u[i] = W
    traj.sigma[i] = S
    return traj


def nonlinear_load(space, F, coeffs, degree=6):
    """``((F(u_h), phi_i))_i`` by quadrature of ``F`` at quadrature points."""
    pts, w = triangle_rule(degree)
    uq, _ = evaluate_field(space, coeffs, pts)
    phi, _ = space.tabulate(pts)
    det = np.linalg.det(space.mesh.jacobians)
    local = np.einsum("faq,fq,q,f->fa", phi, F(uq), w, det)
    return np.bincount(
        space.cell_dofs.ravel(), weights=local.ravel(), minlength=space.dof_count
    )


def step_semilinear(ss, la, nl, traj, i):
    """IMEX backward Euler step with fixed-point iteration on ``F(u_h)``."""
    if traj.scheme is not Scheme.BACKWARD_EULER:
        raise StepError("semi-linear stepping supports backward Euler only", step=i)
    dt = _dt(traj, i)
    A = ss.op.A
    space = ss.op.s_u
    current = traj.u[i - 1].copy()
    for it in range(FIXED_POINT_MAXITER):
        N = nonlinear_load(space, nl.F, current)
        step_parabolic(ss, la, traj, i, extra_load=-N)
        diff = traj.u[i] - current
        change = math.sqrt(max(diff @ (A @ diff), 0.0))
        current = traj.u[i].copy()
        if change < FIXED_POINT_TOL:
            return traj
    raise StepError(
        f"fixed point did not converge in {FIXED_POINT_MAXITER} iterations "
        f"(last change {change:.3e}, dt*C = {dt * nl.lipschitz_bound:.3g})",
        step=i,
    )


# --------------------------------------------------------------------------
# drivers


def _initial_sigma(ss, u0):
    """Sigma determined by ``B^T U + D Sigma = 0``."""
    rhs = -(ss.op.B.T @ u0)
    if not np.any(rhs):
        return np.zeros_like(rhs)
    fac = ss.D_factor()
    s = fac.solve(rhs)
    check_residual(fac.matrix, s, rhs, ss.tol, what="initial sigma")
    return s


def run_parabolic(ss, la, g_h, times, scheme=Scheme.BACKWARD_EULER, sigma0=None,
                  check_dissipation=False):
    """Integrate the mixed heat problem from ``u_h(0) = g_h``."""
    op = ss.op
    traj = Trajectory.empty(times, op.A.shape[0], op.D.shape[0], Scheme(scheme),
                            Problem.PARABOLIC)
    traj.u[0] = g_h
    traj.sigma[0] = _initial_sigma(ss, g_h) if sigma0 is None else sigma0
    prev = math.sqrt(g_h @ (op.A @ g_h))
    for i in range(1, len(traj.times)):
        step_parabolic(ss, la, traj, i)
        if check_dissipation:
            cur = math.sqrt(traj.u[i] @ (op.A @ traj.u[i]))
            if cur > prev * (1 + 1e-12) + 1e-300:
                raise StepError(f"A-norm grew from {prev:.6e} to {cur:.6e}", step=i)
            prev = cur
    return traj


def run_hyperbolic(ss, la, mu0, sigma0, times, scheme=Scheme.CRANK_NICOLSON):
    """Integrate the velocity-stress wave problem from ``(mu0, sigma0)``."""
    op = ss.op
    traj = Trajectory.empty(times, op.A.shape[0], op.D.shape[0], Scheme(scheme),
                            Problem.HYPERBOLIC)
    traj.u[0] = mu0
    traj.sigma[0] = sigma0
    for i in range(1, len(traj.times)):
        step_hyperbolic(ss, la, traj, i)
    return traj


def run_semilinear(ss, la, nl, g_h, times):
    op = ss.op
    traj = Trajectory.empty(times, op.A.shape[0], op.D.shape[0],
                            Scheme.BACKWARD_EULER, Problem.SEMILINEAR)
    traj.u[0] = g_h
    traj.sigma[0] = _initial_sigma(ss, g_h)
    for i in range(1, len(traj.times)):
        step_semilinear(ss, la, nl, traj, i)
    return traj


def energy(op, traj):
    """Discrete energy ``|mu|_A^2 + |sigma|_D^2`` at every node."""
    eu = np.einsum("ij,ij->i", traj.u, (op.A @ traj.u.T).T)
    es = np.einsum("ij,ij->i", traj.sigma, (op.D @ traj.sigma.T).T)
    return eu + es
