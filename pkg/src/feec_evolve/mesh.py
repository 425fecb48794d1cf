"""Oriented triangle meshes of polygonal domains and uniform refinement.

Conventions
-----------
* Triangles are stored counterclockwise, so every affine map from the
  reference triangle ``{(0,0), (1,0), (0,1)}`` has positive determinant.
* Local edge ``i`` of a triangle is the edge opposite local vertex ``i``,
  traversed ``v[i+1] -> v[i+2]`` (the orientation induced by the boundary
  of the triangle).
* Global edges are oriented from the lower to the higher vertex index. The
  incidence sign of (triangle, local edge) is +1 when the induced and the
  global orientation agree.
* The global unit normal of an edge is its global tangent rotated
  clockwise. For a triangle it is outward exactly when the incidence sign
  is +1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MeshError

__all__ = [
    "SimplicialMesh",
    "unit_square_mesh",
    "refine_uniform",
    "triangle_geometry",
    "write_mesh_text",
]

# local edge i joins local vertices _EDGE_VERTS[i]
_EDGE_VERTS = np.array([[1, 2], [2, 0], [0, 1]])


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SimplicialMesh:
    """Immutable oriented triangulation.

    Build instances with :meth:`from_triangles`; the derived connectivity
    (edges, incidence, boundary) is computed there.
    """

    vertices: np.ndarray  # (V, 2)
    triangles: np.ndarray  # (F, 3), counterclockwise
    edges: np.ndarray  # (E, 2), edges[:, 0] < edges[:, 1]
    tri_edges: np.ndarray  # (F, 3) global edge index of local edge i
    tri_edge_signs: np.ndarray  # (F, 3) +1/-1
    boundary_edges: np.ndarray  # sorted edge indices
    level: int = 0
    h: float = field(default=0.0)

    @classmethod
    def from_triangles(cls, vertices, triangles, level=0):
        vertices = np.asarray(vertices, dtype=float)
        triangles = np.asarray(triangles, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise MeshError("vertices must have shape (V, 2)")
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise MeshError("triangles must have shape (F, 3)")

        p = vertices[triangles]
        area2 = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (
            p[:, 2, 0] - p[:, 0, 0]
        ) * (p[:, 1, 1] - p[:, 0, 1])
        bad = np.flatnonzero(area2 <= 0.0)
        if bad.size:
            raise MeshError(
                f"triangle {bad[0]} has non-positive signed area {area2[bad[0]] / 2}"
            )

        local = triangles[:, _EDGE_VERTS]  # (F, 3, 2) in induced direction
        signs = np.where(local[..., 0] < local[..., 1], 1, -1)
        keys = np.sort(local, axis=-1).reshape(-1, 2)
        edges, inverse, counts = np.unique(
            keys, axis=0, return_inverse=True, return_counts=True
        )
        if counts.max() > 2:
            raise MeshError("an edge is shared by more than two triangles")
        tri_edges = inverse.reshape(-1, 3)

        seg = vertices[edges[:, 1]] - vertices[edges[:, 0]]
        h = float(np.sqrt((seg**2).sum(axis=1)).max())
        return cls(
            vertices=_frozen(vertices, float),
            triangles=_frozen(triangles, np.int64),
            edges=_frozen(edges, np.int64),
            tri_edges=_frozen(tri_edges, np.int64),
            tri_edge_signs=_frozen(signs, np.int64),
            boundary_edges=_frozen(np.flatnonzero(counts == 1), np.int64),
            level=int(level),
            h=h,
        )

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_edges(self):
        return len(self.edges)

    @property
    def num_triangles(self):
        return len(self.triangles)

    @property
    def jacobians(self):
        """Affine map matrices ``[x1 - x0, x2 - x0]`` (as columns), shape (F, 2, 2)."""
        p = self.vertices[self.triangles]
        return np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)

    @property
    def areas(self):
        return 0.5 * np.linalg.det(self.jacobians)

    @property
    def edge_lengths(self):
        seg = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.sqrt((seg**2).sum(axis=1))

    @property
    def edge_normals(self):
        """Global unit normals (tangent low -> high rotated clockwise)."""
        seg = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        n = np.stack([seg[:, 1], -seg[:, 0]], axis=1)
        return n / np.linalg.norm(n, axis=1)[:, None]

    def map_points(self, ref_points):
        """Map reference points (Q, 2) to every triangle: shape (F, Q, 2)."""
        x0 = self.vertices[self.triangles[:, 0]]
        return x0[:, None, :] + np.einsum("fij,qj->fqi", self.jacobians, ref_points)

    def __repr__(self):
        return (
            f"SimplicialMesh(level={self.level}, V={self.num_vertices}, "
            f"E={self.num_edges}, F={self.num_triangles}, h={self.h:.4g})"
        )


def unit_square_mesh():
    """Two-triangle mesh of (0,1)^2 split along the diagonal (0,0)-(1,1)."""
    vertices = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]
    triangles = [[0, 1, 2], [0, 2, 3]]
    return SimplicialMesh.from_triangles(vertices, triangles, level=0)


def refine_uniform(m, times=1):
    """Red refinement: split each triangle into four via edge midpoints.

    Midpoint of edge ``e`` gets vertex index ``V + e``. Child ordering per
    parent is (corner 0, corner 1, corner 2, center), all counterclockwise.
    """
    for _ in range(times):
        V = m.num_vertices
        mids = 0.5 * (m.vertices[m.edges[:, 0]] + m.vertices[m.edges[:, 1]])
        vertices = np.vstack([m.vertices, mids])
        v = m.triangles
        e = m.tri_edges + V  # midpoint opposite local vertex i
        children = np.stack(
            [
                np.stack([v[:, 0], e[:, 2], e[:, 1]], axis=1),
                np.stack([e[:, 2], v[:, 1], e[:, 0]], axis=1),
                np.stack([e[:, 1], e[:, 0], v[:, 2]], axis=1),
                np.stack([e[:, 0], e[:, 1], e[:, 2]], axis=1),
            ],
            axis=1,
        ).reshape(-1, 3)
        m = SimplicialMesh.from_triangles(vertices, children, level=m.level + 1)
    return m


def triangle_geometry(m, t):
    """Geometry of triangle ``t``.

    Returns
    -------
    area : float
    jacobian : (2, 2) array
        Columns are ``x1 - x0`` and ``x2 - x0``.
    edge_lengths : (3,) array
        Length of local edge i (opposite vertex i).
    outward_normals : (3, 2) array
        Unit outward normal of local edge i.
    """
    if not 0 <= t < m.num_triangles:
        raise IndexError(f"triangle index {t} out of range")
    p = m.vertices[m.triangles[t]]
    jac = np.column_stack([p[1] - p[0], p[2] - p[0]])
    area = 0.5 * np.linalg.det(jac)
    if not area > 0.0:
        raise MeshError(f"triangle {t} is degenerate (area {area})")
    tang = p[_EDGE_VERTS[:, 1]] - p[_EDGE_VERTS[:, 0]]
    lengths = np.linalg.norm(tang, axis=1)
    normals = np.column_stack([tang[:, 1], -tang[:, 0]]) / lengths[:, None]
    return area, jac, lengths, normals


def write_mesh_text(m, path):
    """Dump a mesh as plain text for debugging.

    Format: a header line ``mesh level V E F``, then one line per entity::

        v <index> <x> <y>
        e <index> <v_low> <v_high> <boundary 0|1>
        t <index> <v0> <v1> <v2> <e0> <e1> <e2> <s0> <s1> <s2>
    """
    on_boundary = np.zeros(m.num_edges, dtype=int)
    on_boundary[m.boundary_edges] = 1
    with open(path, "w") as fh:
        fh.write(f"mesh {m.level} {m.num_vertices} {m.num_edges} {m.num_triangles}\n")
        for i, (x, y) in enumerate(m.vertices):
            fh.write(f"v {i} {x!r} {y!r}\n")
        for i, (a, b) in enumerate(m.edges):
            fh.write(f"e {i} {a} {b} {on_boundary[i]}\n")
        for i in range(m.num_triangles):
            ids = " ".join(
                str(int(k))
                for k in (*m.triangles[i], *m.tri_edges[i], *m.tri_edge_signs[i])
            )
            fh.write(f"t {i} {ids}\n")
