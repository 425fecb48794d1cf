"""Finite element spaces of (n-1)-forms (H(div)) and n-forms (L^2) in 2D.

Supported spaces, in differential-form and classical names:

=====================  =======  ==============================
P^-_1 Lambda^1          RT0      one flux per edge
P_1 Lambda^1            BDM1     two edge moments per edge
P^-_2 Lambda^1          RT1      two edge moments per edge, two interior
P_0 Lambda^2            DG0      one value per triangle
P_1 Lambda^2            DG1      three values per triangle
=====================  =======  ==============================

Vector spaces are built from an explicit prime basis on the reference
triangle (for trimmed spaces the ``P_r^2 + x * homogeneous`` form), made
dual to reference degrees of freedom, and carried to each triangle with
the contravariant Piola map ``phi = J phi_ref / det J``. The 2-form spaces
are represented by their coefficient proxy (a scalar function), so the
constant DG0 basis function has value 1.

Degrees of freedom of the vector spaces:

* edge moments ``int_e w.n q_k ds`` with ``q_0 = 1``, ``q_1 = 2s - 1``,
  where ``n`` is the global edge normal and ``s`` runs from the lower to
  the higher vertex;
* interior moments ``int_K w . (J^{-T} e_j) dx`` (RT1 only).

Because edge moments are invariant under the Piola map, the local basis
on a triangle is the mapped reference basis times ``sign ** (k + 1)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigurationError
from .quadrature import interval_rule, triangle_rule

__all__ = [
    "Family",
    "ElementFamily",
    "FESpace",
    "ELEMENTS",
    "element",
    "local_dimension",
    "build_space",
    "eval_basis",
    "canonical_interpolation",
    "l2_projection",
    "evaluate_field",
]

# exponents (a, b) of x^a y^b
_MONOMIALS = np.array([(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)])
_REF_VERTS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
_EDGE_VERTS = np.array([[1, 2], [2, 0], [0, 1]])
_DOF_QUAD_DEGREE = 12


class Family(enum.Enum):
    FULL = "P"
    TRIMMED = "P-"


@dataclass(frozen=True)
class ElementFamily:
    """One polynomial form family on triangles.

    ``degree`` is the polynomial index of the family (``r + 1`` for the
    (n-1)-form spaces here). For n-forms, ``P^-_{r+1}`` and ``P_r`` are the
    same space and normalize to the ``Full`` representative.
    """

    family: Family
    degree: int
    form_order: int

    def __post_init__(self):
        if self.form_order == 2 and self.family is Family.TRIMMED:
            object.__setattr__(self, "family", Family.FULL)
            object.__setattr__(self, "degree", self.degree - 1)
        if (self.family, self.degree, self.form_order) not in _SUPPORTED:
            raise ConfigurationError(
                f"unsupported element {self.family.value}_{self.degree}"
                f"Lambda^{self.form_order}; supported: {', '.join(ELEMENTS)}"
            )

    @property
    def name(self):
        return _SUPPORTED[(self.family, self.degree, self.form_order)]

    @property
    def r(self):
        """Index r of a stable pair: (n-1)-forms of degree r+1, n-forms of degree r."""
        return self.degree - 1 if self.form_order == 1 else self.degree

    @property
    def local_dim(self):
        return local_dimension(self.family, self.degree, self.form_order)

    def __str__(self):
        return self.name


_SUPPORTED = {
    (Family.TRIMMED, 1, 1): "RT0",
    (Family.FULL, 1, 1): "BDM1",
    (Family.TRIMMED, 2, 1): "RT1",
    (Family.FULL, 0, 2): "DG0",
    (Family.FULL, 1, 2): "DG1",
}
ELEMENTS = {name: key for key, name in _SUPPORTED.items()}


def element(name):
    """Look up an :class:`ElementFamily` by short name, e.g. ``"RT0"``."""
    try:
        family, degree, k = ELEMENTS[name.upper()]
    except KeyError:
        raise ConfigurationError(
            f"unknown element {name!r}; choose from {', '.join(ELEMENTS)}"
        ) from None
    return ElementFamily(family, degree, k)


def local_dimension(family, degree, form_order):
    """Dimension of P_r Lambda^k or P^-_r Lambda^k on one triangle (n = 2)."""
    r = degree
    if r < 0:
        return 0
    full = {0: (r + 1) * (r + 2) // 2, 1: (r + 1) * (r + 2), 2: (r + 1) * (r + 2) // 2}
    if family is Family.FULL:
        return full[form_order]
    if r == 0:
        return 0
    trimmed = {0: (r + 1) * (r + 2) // 2, 1: r * (r + 2), 2: r * (r + 1) // 2}
    return trimmed[form_order]


# --------------------------------------------------------------------------
# reference elements


def _monomials(points):
    x, y = points[..., 0:1], points[..., 1:2]
    return x ** _MONOMIALS[:, 0] * y ** _MONOMIALS[:, 1]


def _monomial_grads(points):
    x, y = points[..., 0:1], points[..., 1:2]
    a, b = _MONOMIALS[:, 0], _MONOMIALS[:, 1]
    dx = a * x ** np.maximum(a - 1, 0) * y**b
    dy = b * x**a * y ** np.maximum(b - 1, 0)
    return dx, dy


def _vec(px=(), py=()):
    """Vector polynomial coefficients (2, 6) from {monomial index: coeff}."""
    c = np.zeros((2, len(_MONOMIALS)))
    for i, v in dict(px).items():
        c[0, i] = v
    for i, v in dict(py).items():
        c[1, i] = v
    return c


# monomial indices: 0:1 1:x 2:y 3:x^2 4:xy 5:y^2
_P0_VEC = [_vec({0: 1}), _vec(py={0: 1})]
_P1_VEC = _P0_VEC + [_vec({1: 1}), _vec({2: 1}), _vec(py={1: 1}), _vec(py={2: 1})]
_PRIME = {
    "RT0": _P0_VEC + [_vec({1: 1}, {2: 1})],
    "BDM1": _P1_VEC,
    "RT1": _P1_VEC + [_vec({3: 1}, {4: 1}), _vec({4: 1}, {5: 1})],
}
_EDGE_MOMENTS = {"RT0": 1, "BDM1": 2, "RT1": 2}
_INTERIOR = {"RT0": 0, "BDM1": 0, "RT1": 2}


def _legendre(k, s):
    return np.ones_like(s) if k == 0 else 2.0 * s - 1.0


class _ReferenceHdiv:
    """Nodal basis of an H(div) element on the reference triangle."""

    def __init__(self, name):
        prime = np.array(_PRIME[name])  # (P, 2, 6)
        self.name = name
        self.n_edge = _EDGE_MOMENTS[name]
        self.n_interior = _INTERIOR[name]
        dofs = self._apply_dofs(prime)  # (ndof, P)
        self.coeffs = np.einsum("pcm,pa->acm", prime, np.linalg.inv(dofs))
        self.dim = len(prime)
        # edge moment index k for each local dof (-1 for interior)
        self.moment = np.array(
            [k for _ in range(3) for k in range(self.n_edge)] + [-1] * self.n_interior
        )
        self.local_edge = np.array(
            [i for i in range(3) for _ in range(self.n_edge)] + [-1] * self.n_interior
        )

    def _apply_dofs(self, polys):
        s, w = interval_rule(_DOF_QUAD_DEGREE)
        rows = []
        for i in range(3):
            a, b = _REF_VERTS[_EDGE_VERTS[i]]
            t = b - a
            nu = np.array([t[1], -t[0]])  # outward normal times edge length
            pts = a + s[:, None] * t
            vals = np.einsum("pcm,qm->pqc", polys, _monomials(pts))
            flux = vals @ nu
            for k in range(self.n_edge):
                rows.append(flux @ (w * _legendre(k, s)))
        if self.n_interior:
            pts, w2 = triangle_rule(_DOF_QUAD_DEGREE)
            vals = np.einsum("pcm,qm->pqc", polys, _monomials(pts))
            for j in range(self.n_interior):
                rows.append(vals[:, :, j] @ w2)
        return np.array(rows)

    def values(self, points):
        """(dim, Q, 2) reference values and (dim, Q) reference divergences."""
        mono = _monomials(points)
        dx, dy = _monomial_grads(points)
        vals = np.einsum("acm,qm->aqc", self.coeffs, mono)
        div = self.coeffs[:, 0] @ dx.T + self.coeffs[:, 1] @ dy.T
        return vals, div


class _ReferenceDG:
    """Barycentric (DG1) or constant (DG0) basis on the reference triangle."""

    def __init__(self, name):
        self.name = name
        self.dim = 1 if name == "DG0" else 3

    def values(self, points):
        if self.dim == 1:
            return np.ones((1, len(points))), None
        x, y = points[:, 0], points[:, 1]
        return np.stack([1.0 - x - y, x, y]), None


_REFERENCE = {}


def _reference(name):
    if name not in _REFERENCE:
        _REFERENCE[name] = (
            _ReferenceDG(name) if name.startswith("DG") else _ReferenceHdiv(name)
        )
    return _REFERENCE[name]


# --------------------------------------------------------------------------
# global spaces


@dataclass(frozen=True, eq=False)
class FESpace:
    """A finite element space on a mesh.

    Attributes
    ----------
    cell_dofs : (F, nloc) int array
        Global index of each local basis function.
    cell_signs : (F, nloc) float array
        The global basis function restricted to triangle ``t`` equals
        ``cell_signs[t, a]`` times the mapped local basis function ``a``.
    """

    mesh: object
    element: ElementFamily
    dof_count: int
    cell_dofs: np.ndarray
    cell_signs: np.ndarray

    @property
    def name(self):
        return self.element.name

    @property
    def form_order(self):
        return self.element.form_order

    @property
    def is_vector(self):
        return self.element.form_order == 1

    @property
    def reference(self):
        return _reference(self.element.name)

    @property
    def local_dim(self):
        return self.cell_dofs.shape[1]

    def dof_map(self, t, a):
        """(global index, sign) of local basis function ``a`` on triangle ``t``."""
        return int(self.cell_dofs[t, a]), int(self.cell_signs[t, a])

    @cached_property
    def dof_functionals(self):
        """Description of each global DOF.

        ``("edge", e, k)``: moment of the normal component on edge ``e``
        against the k-th Legendre polynomial; ``("interior", t, j)``: moment
        against the covariantly mapped j-th unit vector; ``("cell", t, a)``:
        L^2 moment against local basis function ``a`` (DG spaces).
        """
        out = [None] * self.dof_count
        if not self.is_vector:
            for t in range(self.mesh.num_triangles):
                for a in range(self.local_dim):
                    out[self.cell_dofs[t, a]] = ("cell", t, a)
            return out
        ref = self.reference
        for t in range(self.mesh.num_triangles):
            for a in range(self.local_dim):
                i = ref.local_edge[a]
                if i >= 0:
                    item = ("edge", int(self.mesh.tri_edges[t, i]), int(ref.moment[a]))
                else:
                    item = ("interior", t, a - 3 * ref.n_edge)
                out[self.cell_dofs[t, a]] = item
        return out

    def tabulate(self, ref_points):
        """Physical basis values at mapped reference points, per triangle.

        Returns
        -------
        values : (F, nloc, Q, 2) for vector spaces, (F, nloc, Q) for scalar
        divs : (F, nloc, Q) or None
            Signs are already applied.
        """
        ref_points = np.atleast_2d(ref_points)
        vals, div = self.reference.values(ref_points)
        m = self.mesh
        if not self.is_vector:
            return np.broadcast_to(vals, (m.num_triangles,) + vals.shape), None
        J = m.jacobians
        det = np.linalg.det(J)
        scale = self.cell_signs / det[:, None]  # (F, nloc)
        phys = np.einsum("fij,aqj->faqi", J, vals) * scale[:, :, None, None]
        divs = div[None] * scale[:, :, None]
        return phys, divs

    def __repr__(self):
        return f"FESpace({self.name}, dofs={self.dof_count}, {self.mesh!r})"


def build_space(m, e):
    """Enumerate DOFs of element family ``e`` (or its name) on mesh ``m``."""
    if isinstance(e, str):
        e = element(e)
    ref = _reference(e.name)
    F = m.num_triangles
    if e.form_order == 2:
        cell_dofs = np.arange(F * ref.dim).reshape(F, ref.dim)
        signs = np.ones((F, ref.dim))
        ndof = F * ref.dim
    else:
        nk = ref.n_edge
        edge_part = m.tri_edges[:, :, None] * nk + np.arange(nk)  # (F, 3, nk)
        sgn = m.tri_edge_signs[:, :, None] ** (np.arange(nk) + 1)
        cell_dofs = edge_part.reshape(F, -1)
        signs = sgn.reshape(F, -1).astype(float)
        ndof = nk * m.num_edges
        if ref.n_interior:
            interior = ndof + np.arange(F * ref.n_interior).reshape(F, ref.n_interior)
            cell_dofs = np.hstack([cell_dofs, interior])
            signs = np.hstack([signs, np.ones((F, ref.n_interior))])
            ndof += F * ref.n_interior
    cell_dofs.setflags(write=False)
    signs.setflags(write=False)
    return FESpace(m, e, int(ndof), cell_dofs, signs)


def _check_reference_points(points):
    p = np.atleast_2d(np.asarray(points, dtype=float))
    tol = 1e-12
    if (
        p.shape[-1] != 2
        or np.any(p[:, 0] < -tol)
        or np.any(p[:, 1] < -tol)
        or np.any(p.sum(axis=1) > 1 + tol)
    ):
        raise ValueError("point(s) outside the closed reference triangle")
    return p


def eval_basis(s, t, points):
    """Physical values and divergences of the local basis of triangle ``t``.

    ``points`` are reference coordinates, shape (2,) or (Q, 2).

    Returns
    -------
    values : (nloc, Q, 2) or (nloc, Q)
    divs : (nloc, Q) or None for n-form spaces
    """
    p = _check_reference_points(points)
    vals, div = s.reference.values(p)
    if not s.is_vector:
        return vals, None
    J = s.mesh.jacobians[t]
    det = np.linalg.det(J)
    sign = s.cell_signs[t]
    phys = np.einsum("ij,aqj->aqi", J, vals) * (sign / det)[:, None, None]
    return phys, div * (sign / det)[:, None]


def evaluate_field(s, coeffs, ref_points):
    """Values (and divergence) of a coefficient vector at mapped points.

    Returns ``(values, divs)`` with values (F, Q[, 2]) and divs (F, Q) or None.
    """
    vals, divs = s.tabulate(ref_points)
    c = np.asarray(coeffs)[s.cell_dofs]
    if s.is_vector:
        return np.einsum("fa,faqi->fqi", c, vals), np.einsum("fa,faq->fq", c, divs)
    return np.einsum("fa,faq->fq", c, vals), None


def canonical_interpolation(s, w):
    """Degree-of-freedom interpolant of ``w``.

    ``w`` maps points of shape (..., 2) to values (..., 2) for vector
    spaces or (...) for n-form spaces. For n-form spaces the canonical
    projection is the element-wise L^2 projection onto P_r.
    """
    m = s.mesh
    if not s.is_vector:
        return _local_l2_projection(s, w)
    ref = s.reference
    nk = ref.n_edge
    out = np.zeros(s.dof_count)
    sq, wq = interval_rule(_DOF_QUAD_DEGREE)
    a = m.vertices[m.edges[:, 0]]
    b = m.vertices[m.edges[:, 1]]
    pts = a[:, None, :] + sq[None, :, None] * (b - a)[:, None, :]
    flux = np.einsum("eqi,ei->eq", w(pts), m.edge_normals) * m.edge_lengths[:, None]
    for k in range(nk):
        out[np.arange(m.num_edges) * nk + k] = flux @ (wq * _legendre(k, sq))
    if ref.n_interior:
        tp, tw = triangle_rule(_DOF_QUAD_DEGREE)
        J = m.jacobians
        vals = w(m.map_points(tp))  # (F, Q, 2)
        # w . J^{-T} e_j dx = (J^{-1} w)_j det J dx_ref
        pulled = np.einsum("fij,fqj->fqi", np.linalg.inv(J), vals)
        mom = np.einsum("fqi,q->fi", pulled, tw) * np.linalg.det(J)[:, None]
        out[s.cell_dofs[:, 3 * nk :]] = mom[:, : ref.n_interior]
    return out


def _local_l2_projection(s, w):
    tp, tw = triangle_rule(_DOF_QUAD_DEGREE)
    phi, _ = s.reference.values(tp)  # (nloc, Q)
    M = (phi * tw) @ phi.T  # reference mass; physical = |det J| * M
    vals = w(s.mesh.map_points(tp))  # (F, Q)
    rhs = vals @ (phi * tw).T  # (F, nloc), common det J cancels
    coef = np.linalg.solve(M, rhs.T).T
    out = np.zeros(s.dof_count)
    out[s.cell_dofs] = coef
    return out


def l2_projection(s, w, quad_degree=None):
    """Global L^2 projection of ``w`` onto the space (mass-matrix solve)."""
    from .assembly import load_vector, mass_matrix
    from .linalg import SPDFactor, check_residual

    if not s.is_vector:
        return _local_l2_projection(s, w)
    M = mass_matrix(s)
    rhs = load_vector(s, w, degree=quad_degree)
    if not np.any(rhs):
        return np.zeros(s.dof_count)
    x = SPDFactor(M, name=f"{s.name} mass").solve(rhs)
    check_residual(M, x, rhs, 1e-10, what="L2 projection")
    return x
