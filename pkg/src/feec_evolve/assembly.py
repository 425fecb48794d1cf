"""Sparse assembly of the mixed system matrices and load vectors.

With ``phi_i`` spanning the n-form space and ``omega_j`` the (n-1)-form
space, the semi-discrete heat problem reads::

    A U_t - B Sigma = F
    B^T U + D Sigma = 0

where ``A_ij = (phi_j, phi_i)``, ``D_ij = (omega_j, omega_i)`` and
``B_ij = (div omega_j, phi_i)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.sparse as sps

from .errors import ConfigurationError
from .quadrature import triangle_rule

__all__ = [
    "ADMISSIBLE_PAIRS",
    "MixedOperator",
    "LoadAssembler",
    "mass_matrix",
    "divergence_matrix",
    "load_vector",
    "assemble_mixed",
    "assemble_load",
    "write_triplets",
]

DEFAULT_LOAD_DEGREE = 10

# (sigma element, u element) pairs with div Lambda^{n-1}_h = Lambda^n_h
ADMISSIBLE_PAIRS = (("RT0", "DG0"), ("BDM1", "DG0"), ("RT1", "DG1"))

_POLY_DEGREE = {"RT0": 1, "BDM1": 1, "RT1": 2, "DG0": 0, "DG1": 1}


def _mass_degree(space):
    # exact for the mass integrand on affine triangles, with the spare +2
    return 2 * _POLY_DEGREE[space.name] + 2


def _scatter(local, row_dofs, col_dofs, shape):
    """Sum per-element matrices (F, m, n) into a canonical CSR matrix."""
    m, n = local.shape[1:]
    rows = np.repeat(row_dofs, n, axis=1).ravel()
    cols = np.tile(col_dofs, (1, m)).ravel()
    mat = sps.coo_matrix((local.ravel(), (rows, cols)), shape=shape).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def mass_matrix(space, degree=None):
    """L^2 Gram matrix of the space's global basis."""
    pts, w = triangle_rule(degree or _mass_degree(space))
    vals, _ = space.tabulate(pts)
    det = np.linalg.det(space.mesh.jacobians)
    wq = w[None, :] * det[:, None]
    if space.is_vector:
        local = np.einsum("faqi,fbqi,fq->fab", vals, vals, wq)
    else:
        local = np.einsum("faq,fbq,fq->fab", vals, vals, wq)
    local = 0.5 * (local + local.transpose(0, 2, 1))
    n = space.dof_count
    return _scatter(local, space.cell_dofs, space.cell_dofs, (n, n))


def divergence_matrix(s_sigma, s_u, degree=None):
    """``B_ij = (div omega_j, phi_i)``, shape (dofs(u), dofs(sigma))."""
    deg = degree or (_POLY_DEGREE[s_sigma.name] - 1 + _POLY_DEGREE[s_u.name] + 2)
    pts, w = triangle_rule(deg)
    _, divs = s_sigma.tabulate(pts)
    phi, _ = s_u.tabulate(pts)
    det = np.linalg.det(s_u.mesh.jacobians)
    local = np.einsum("fiq,fjq,q,f->fij", phi, divs, w, det)
    return _scatter(
        local, s_u.cell_dofs, s_sigma.cell_dofs, (s_u.dof_count, s_sigma.dof_count)
    )


def _load_operator(space, degree):
    """Quadrature points and the sparse map from point values to load vector."""
    pts, w = triangle_rule(degree)
    vals, _ = space.tabulate(pts)
    det = np.linalg.det(space.mesh.jacobians)
    F, nloc, Q = vals.shape[:3]
    ncomp = 2 if space.is_vector else 1
    wq = (w[None, :] * det[:, None])[:, None, :]
    if space.is_vector:
        wq = wq[..., None]
    weighted = np.ascontiguousarray(vals * wq).reshape(F, nloc, Q * ncomp)
    rows = np.repeat(space.cell_dofs, Q * ncomp, axis=1).ravel()
    cols = np.broadcast_to(
        np.arange(F * Q * ncomp).reshape(F, 1, Q * ncomp), weighted.shape
    ).ravel()
    op = sps.csr_matrix(
        (weighted.ravel(), (rows, cols)), shape=(space.dof_count, F * Q * ncomp)
    )
    return space.mesh.map_points(pts), op


def _apply_load(xq, op, func):
    fx = np.asarray(func(xq), dtype=float)
    fx = np.broadcast_to(fx, xq.shape if op.shape[1] == xq.size else xq.shape[:-1])
    return op @ fx.ravel()


def load_vector(space, func, degree=None):
    """``b_i = int func . phi_i dx``; ``func`` maps points (..., 2) to values."""
    xq, op = _load_operator(space, degree or DEFAULT_LOAD_DEGREE)
    return _apply_load(xq, op, func)


@dataclass(frozen=True, eq=False)
class MixedOperator:
    """Assembled ``A`` (n-form mass), ``D`` ((n-1)-form mass), ``B`` (div coupling)."""

    A: sps.csr_matrix
    D: sps.csr_matrix
    B: sps.csr_matrix
    s_sigma: object
    s_u: object

    @property
    def pair(self):
        return f"{self.s_sigma.name}/{self.s_u.name}"


def check_pair(s_sigma, s_u):
    """Raise :class:`ConfigurationError` unless the spaces form a stable pair."""
    if s_sigma.mesh is not s_u.mesh:
        raise ConfigurationError("spaces live on different meshes")
    if s_sigma.form_order != 1 or s_u.form_order != 2:
        raise ConfigurationError(
            f"expected (n-1, n) form orders, got ({s_sigma.form_order}, {s_u.form_order})"
        )
    if s_sigma.element.r != s_u.element.r:
        raise ConfigurationError(
            f"{s_sigma.name}/{s_u.name} is not an admissible pair: "
            f"div {s_sigma.name} must match the n-form degree r = {s_sigma.element.r}"
        )


def assemble_mixed(s_sigma, s_u):
    check_pair(s_sigma, s_u)
    return MixedOperator(
        A=mass_matrix(s_u),
        D=mass_matrix(s_sigma),
        B=divergence_matrix(s_sigma, s_u),
        s_sigma=s_sigma,
        s_u=s_u,
    )


@dataclass(frozen=True)
class LoadAssembler:
    """Time-dependent load ``t -> ((f(., t), phi_i))_i`` on an n-form space."""

    f: Callable
    target: object
    degree: int = DEFAULT_LOAD_DEGREE

    @cached_property
    def _operator(self):
        return _load_operator(self.target, self.degree)

    def __call__(self, t):
        return assemble_load(self, t)


def assemble_load(la, t):
    xq, op = la._operator
    return _apply_load(xq, op, lambda x: la.f(x, t))


def write_triplets(matrix, path):
    """Write a sparse matrix as ``row col value`` lines, sorted by (row, col)."""
    coo = sps.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        fh.write(f"% {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for k in order:
            fh.write(f"{coo.row[k]} {coo.col[k]} {float(coo.data[k])!r}\n")
