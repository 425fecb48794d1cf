import math

import numpy as np
import pytest
import scipy.sparse as sps
import sympy as sp

from feec_evolve.assembly import (
    ADMISSIBLE_PAIRS,
    LoadAssembler,
    assemble_load,
    assemble_mixed,
    check_pair,
    load_vector,
    mass_matrix,
    write_triplets,
)
from feec_evolve.elements import build_space, eval_basis
from feec_evolve.errors import ConfigurationError
from feec_evolve.linalg import SPDFactor
from feec_evolve.mesh import SimplicialMesh, refine_uniform, unit_square_mesh

from helpers import dense_assembly, duffy_rule


@pytest.mark.parametrize("level", [0, 1, 2])
@pytest.mark.parametrize("sig,u", ADMISSIBLE_PAIRS)
def test_dense_vs_sparse(perturbed_mesh, level, sig, u):
    m = perturbed_mesh if level == 2 else refine_uniform(unit_square_mesh(), level)
    assert m.num_triangles <= 32
    op = assemble_mixed(build_space(m, sig), build_space(m, u))
    A, D, B = dense_assembly(op.s_sigma, op.s_u)
    for got, want in ((op.A, A), (op.D, D), (op.B, B)):
        assert sps.isspmatrix_csr(got) and got.has_sorted_indices
        np.testing.assert_allclose(got.toarray(), want, atol=1e-12)


def test_reference_rt0_mass_oracle(reference_mesh):
    s = build_space(reference_mesh, "RT0")
    pts, w = duffy_rule(6)
    vals, _ = eval_basis(s, 0, pts)
    oracle = np.einsum("aqi,bqi,q->ab", vals, vals, w)
    dofs = s.cell_dofs[0]
    np.testing.assert_allclose(mass_matrix(s).toarray()[np.ix_(dofs, dofs)], oracle, atol=1e-14)


def test_reference_rt0_mass_exact(reference_mesh):
    # unit-flux RT0 on the reference triangle: phi_i = s_i (x - p_i) since 2|T| = 1
    x, y = sp.symbols("x y")
    p = [(0, 0), (1, 0), (0, 1)]
    s = build_space(reference_mesh, "RT0")
    sign = s.cell_signs[0]
    exact = np.zeros((3, 3))
    for i in range(3):
        for j in range(3):
            integrand = (x - p[i][0]) * (x - p[j][0]) + (y - p[i][1]) * (y - p[j][1])
            val = sp.integrate(sp.integrate(integrand, (y, 0, 1 - x)), (x, 0, 1))
            exact[i, j] = sign[i] * sign[j] * float(val)
    dofs = s.cell_dofs[0]
    np.testing.assert_allclose(mass_matrix(s).toarray()[np.ix_(dofs, dofs)], exact, atol=1e-15)


def test_dg0_mass_on_square(square):
    A = mass_matrix(build_space(square, "DG0"))
    np.testing.assert_array_equal(A.toarray(), 0.5 * np.eye(2))


def test_rt0_divergence_signs(perturbed_mesh):
    m = perturbed_mesh
    op = assemble_mixed(build_space(m, "RT0"), build_space(m, "DG0"))
    B = op.B.toarray()
    for t in range(m.num_triangles):
        expected = np.zeros(m.num_edges)
        expected[m.tri_edges[t]] = m.tri_edge_signs[t]
        np.testing.assert_allclose(B[t], expected, atol=1e-13)


def test_scaling(square):
    c = 3.0
    big = SimplicialMesh.from_triangles(c * square.vertices, square.triangles)
    for sig, u in ADMISSIBLE_PAIRS:
        small_op = assemble_mixed(build_space(square, sig), build_space(square, u))
        big_op = assemble_mixed(build_space(big, sig), build_space(big, u))
        np.testing.assert_allclose(big_op.A.toarray(), c**2 * small_op.A.toarray(), rtol=1e-13)
        np.testing.assert_allclose(big_op.D.toarray(), small_op.D.toarray(), rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(big_op.B.toarray(), small_op.B.toarray(), atol=1e-13)


def test_spd_of_mixed_blocks(pair_op):
    op = pair_op
    A = op.A.toarray()
    Ainv = np.linalg.inv(A)
    for k in (0.5, 0.01):
        S = op.D.toarray() + k**2 * op.B.T.toarray() @ Ainv @ op.B.toarray()
        for M, name in ((A, "A"), (op.D.toarray(), "D"), (S, "S")):
            np.testing.assert_allclose(M, M.T, atol=1e-14)
            assert np.linalg.eigvalsh(M).min() > 0, name
            assert SPDFactor(sps.csc_matrix(M), name).min_pivot > 0


def test_divergence_surjective(pair_op):
    # div onto Lambda^n_h: B has full row rank
    B = pair_op.B.toarray()
    assert np.linalg.matrix_rank(B) == B.shape[0]


def test_check_pair_errors(square, mesh2):
    with pytest.raises(ConfigurationError, match="admissible"):
        check_pair(build_space(square, "RT0"), build_space(square, "DG1"))
    with pytest.raises(ConfigurationError, match="form orders"):
        check_pair(build_space(square, "DG0"), build_space(square, "RT0"))
    with pytest.raises(ConfigurationError, match="meshes"):
        check_pair(build_space(square, "RT0"), build_space(mesh2, "DG0"))


def test_operator_pair_name(square):
    op = assemble_mixed(build_space(square, "BDM1"), build_space(square, "DG0"))
    assert op.pair == "BDM1/DG0"


def test_zero_load(mesh2):
    s = build_space(mesh2, "DG1")
    assert np.array_equal(load_vector(s, lambda p: 0.0 * p[..., 0]), np.zeros(s.dof_count))


def test_unit_load_gives_areas(perturbed_mesh):
    s = build_space(perturbed_mesh, "DG0")
    np.testing.assert_allclose(load_vector(s, lambda p: 1.0), perturbed_mesh.areas, rtol=1e-14)


def test_sine_load_matches_dense_oracle():
    m = refine_uniform(unit_square_mesh(), 3)
    f = lambda p: 2 * math.pi**2 * np.sin(math.pi * p[..., 0]) * np.sin(math.pi * p[..., 1])
    for name in ("DG0", "DG1"):
        s = build_space(m, name)
        pts, w = duffy_rule(12)
        oracle = np.zeros(s.dof_count)
        for t in range(m.num_triangles):
            phi, _ = eval_basis(s, t, pts)
            x = m.vertices[m.triangles[t, 0]] + pts @ m.jacobians[t].T
            oracle[s.cell_dofs[t]] += abs(np.linalg.det(m.jacobians[t])) * (phi * w) @ f(x)
        np.testing.assert_allclose(load_vector(s, f), oracle, atol=1e-12)


def test_vector_load(mesh2):
    s = build_space(mesh2, "RT0")
    pts, w = duffy_rule(6)
    const = lambda p: np.broadcast_to([1.0, 2.0], p.shape)
    b = load_vector(s, const)
    # (c, phi_i) = c . int phi_i, and int of a field over the domain is linear
    coeff = np.random.default_rng(0).normal(size=s.dof_count)
    total = np.zeros(2)
    for t in range(mesh2.num_triangles):
        vals, _ = eval_basis(s, t, pts)
        total += abs(np.linalg.det(mesh2.jacobians[t])) * np.einsum(
            "a,aqi,q->i", coeff[s.cell_dofs[t]], vals, w)
    assert coeff @ b == pytest.approx(total @ [1.0, 2.0], abs=1e-12)


def test_load_assembler_time_dependence(mesh2):
    s = build_space(mesh2, "DG0")
    la = LoadAssembler(lambda x, t: t * np.ones(x.shape[:-1]), s)
    np.testing.assert_allclose(la(2.0), 2 * mesh2.areas, rtol=1e-14)
    np.testing.assert_array_equal(assemble_load(la, 0.5), la(0.5))


def test_write_triplets(tmp_path, square):
    op = assemble_mixed(build_space(square, "RT0"), build_space(square, "DG0"))
    path = tmp_path / "B.txt"
    write_triplets(op.B, path)
    lines = path.read_text().splitlines()
    assert lines[0] == f"% 2 5 {op.B.nnz}"
    entries = [tuple(l.split()) for l in lines[1:]]
    keys = [(int(r), int(c)) for r, c, _ in entries]
    assert keys == sorted(keys)
    for r, c, v in entries:
        assert float(v) == op.B[int(r), int(c)]
