"""Test-side evaluation of finite element fields at physical points."""

import numpy as np

from feec_evolve.elements import eval_basis


def locate(mesh, pts, tol=1e-12):
    """Triangle index and reference coordinates of each point (brute force)."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    x0 = mesh.vertices[mesh.triangles[:, 0]]
    Jinv = np.linalg.inv(mesh.jacobians)
    ref = np.einsum("fij,pfj->pfi", Jinv, pts[:, None, :] - x0[None])
    inside = (ref[..., 0] >= -tol) & (ref[..., 1] >= -tol) & (ref.sum(-1) <= 1 + tol)
    if not inside.any(axis=1).all():
        raise ValueError("point outside the mesh")
    tri = inside.argmax(axis=1)
    xi = np.clip(ref[np.arange(len(pts)), tri], 0.0, 1.0)
    over = xi.sum(axis=1) > 1
    xi[over] /= xi[over].sum(axis=1)[:, None]
    return tri, xi


def field_at(space, coeffs, pts):
    """Values of the discrete field at arbitrary physical points (..., 2)."""
    pts = np.asarray(pts, dtype=float)
    tri, xi = locate(space.mesh, pts)
    vec = space.is_vector
    out = np.zeros((len(tri), 2) if vec else len(tri))
    for t in np.unique(tri):
        sel = tri == t
        vals, _ = eval_basis(space, t, xi[sel])
        c = coeffs[space.cell_dofs[t]]
        out[sel] = np.einsum("a,aqi->qi", c, vals) if vec else c @ vals
    return out.reshape(pts.shape[:-1] + ((2,) if vec else ()))


def as_function(space, coeffs):
    return lambda p: field_at(space, coeffs, p)


def duffy_rule(n):
    """Collapsed Gauss-Legendre rule on the reference triangle (n^2 points).

    Built from numpy's Gauss-Legendre nodes only, so it is independent of
    the package quadrature module.
    """
    z, w = np.polynomial.legendre.leggauss(n)
    s, ws = 0.5 * (z + 1), 0.5 * w
    a, b = np.meshgrid(s, s, indexing="ij")
    wa, wb = np.meshgrid(ws, ws, indexing="ij")
    x = a.ravel()
    y = (b * (1 - a)).ravel()
    return np.column_stack([x, y]), (wa * wb * (1 - a)).ravel()


def dense_assembly(s_sigma, s_u, n=8):
    """Element-by-element dense A, D, B with explicit loops."""
    from feec_evolve.elements import eval_basis

    pts, w = duffy_rule(n)
    m = s_u.mesh
    A = np.zeros((s_u.dof_count, s_u.dof_count))
    D = np.zeros((s_sigma.dof_count, s_sigma.dof_count))
    B = np.zeros((s_u.dof_count, s_sigma.dof_count))
    for t in range(m.num_triangles):
        det = abs(np.linalg.det(m.jacobians[t]))
        phi, _ = eval_basis(s_u, t, pts)
        om, div = eval_basis(s_sigma, t, pts)
        du, ds = s_u.cell_dofs[t], s_sigma.cell_dofs[t]
        for i in range(len(du)):
            for j in range(len(du)):
                A[du[i], du[j]] += det * np.sum(w * phi[i] * phi[j])
            for j in range(len(ds)):
                B[du[i], ds[j]] += det * np.sum(w * phi[i] * div[j])
        for i in range(len(ds)):
            for j in range(len(ds)):
                D[ds[i], ds[j]] += det * np.sum(w * (om[i] * om[j]).sum(-1))
    return A, D, B
