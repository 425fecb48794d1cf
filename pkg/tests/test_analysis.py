import csv
import io
import json
import math

import numpy as np
import pytest

from feec_evolve.analysis import (
    ConvergenceReport,
    bochner_error,
    compute_eoc,
    elliptic_projections,
    error_decomposition,
    field_errors,
    hyperbolic_error_terms,
    splitting_residual,
    predicted_orders,
    sobolev_norm,
    spatial_l2,
    trapezoid_norm,
    _fd_partials,
)
from feec_evolve.assembly import LoadAssembler, assemble_mixed
from feec_evolve.elements import build_space, canonical_interpolation
from feec_evolve.errors import ConfigurationError
from feec_evolve.manufactured import from_expression, manufactured
from feec_evolve.mesh import refine_uniform, unit_square_mesh
from feec_evolve.solvers import (
    Problem,
    SaddleSolver,
    Scheme,
    Trajectory,
    elliptic_projection,
    run_parabolic,
    time_grid,
)

from helpers import duffy_rule


@pytest.fixture(scope="module")
def rt0_level3():
    m = refine_uniform(unit_square_mesh(), 3)
    op = assemble_mixed(build_space(m, "RT0"), build_space(m, "DG0"))
    return op, SaddleSolver(op)


@pytest.fixture(scope="module")
def heat_run(rt0_level3):
    op, ss = rt0_level3
    ms = manufactured("heat-separable")
    g_h, _ = elliptic_projection(ss, ms.laplacian_u, 0.0)
    times = time_grid(0.5, op.s_u.mesh.h ** 2 / 4)
    return ms, run_parabolic(ss, LoadAssembler(ms.f, op.s_u), g_h, times)


# -- EOC ---------------------------------------------------------------------


def test_eoc_examples():
    assert compute_eoc([(1.0, 0.1), (0.5, 0.05)]) == [pytest.approx(1.0)]
    assert compute_eoc([(1.0, 0.16), (0.5, 0.04)]) == [pytest.approx(2.0)]
    assert compute_eoc([(1.0, 0.3), (0.5, 0.3)]) == [0.0]
    assert compute_eoc([(1.0, 0.0), (0.5, 0.0), (0.25, 1.0)]) == [None, None]


def test_eoc_errors():
    with pytest.raises(ValueError):
        compute_eoc([(1.0, 0.1)])
    with pytest.raises(ValueError):
        compute_eoc([(1.0, -0.1), (0.5, 0.1)])


# -- norms -------------------------------------------------------------------


def test_spatial_l2_of_sine():
    m = refine_uniform(unit_square_mesh(), 2)
    val = spatial_l2(m, lambda p: np.sin(np.pi * p[..., 0]) * np.sin(np.pi * p[..., 1]))
    assert val == pytest.approx(0.5, rel=1e-7)


def test_trapezoid_norm_constant():
    assert trapezoid_norm([0.0, 0.25, 0.5], [2.0, 2.0, 2.0]) == pytest.approx(2 * math.sqrt(0.5))


def test_bochner_exact_trajectory_is_zero():
    # u = t is piecewise constant in space with sigma = 0: exactly representable
    ms = from_expression("t", "heat")
    m = refine_uniform(unit_square_mesh(), 1)
    op = assemble_mixed(build_space(m, "RT0"), build_space(m, "DG0"))
    times = time_grid(1.0, 0.25)
    u = np.outer(times, np.ones(op.A.shape[0]))
    tr = Trajectory(times, u, np.zeros((len(times), op.D.shape[0])),
                    Scheme.BACKWARD_EULER, Problem.PARABOLIC)
    err = bochner_error(tr, ms, op)
    assert err.norm_u <= 1e-12 and err.norm_sigma <= 1e-12 and err.norm_div_sigma <= 1e-12
    assert err.norm_mu is None and "norm_mu" not in err.as_dict()


def test_bochner_zero_discrete_solution():
    ms = manufactured("heat-steady")
    m = refine_uniform(unit_square_mesh(), 2)
    op = assemble_mixed(build_space(m, "RT0"), build_space(m, "DG0"))
    times = time_grid(0.5, 0.1)
    tr = Trajectory.empty(times, op.A.shape[0], op.D.shape[0],
                          Scheme.BACKWARD_EULER, Problem.PARABOLIC)
    err = bochner_error(tr, ms, op)
    w = spatial_l2(m, lambda p: ms.u(p, 0.0))
    assert err.norm_u == pytest.approx(math.sqrt(0.5) * w, rel=1e-12)


def test_bochner_rejects_mismatched_trajectory(rt0_level3):
    op, _ = rt0_level3
    tr = Trajectory.empty([0.0, 1.0], 3, 4, Scheme.BACKWARD_EULER, Problem.PARABOLIC)
    with pytest.raises(ConfigurationError):
        bochner_error(tr, manufactured("heat-steady"), op)


def test_bochner_matches_space_time_oracle(rt0_level3, heat_run):
    """Independent oracle: Duffy spatial rule and Simpson in time on a 4x finer grid."""
    op, _ = rt0_level3
    ms, tr = heat_run
    err = bochner_error(tr, ms, op)
    m = op.s_u.mesh
    pts, w = duffy_rule(6)
    x0 = m.vertices[m.triangles[:, 0]]
    xq = x0[:, None, :] + np.einsum("fij,qj->fqi", m.jacobians, pts)
    det = np.abs(np.linalg.det(m.jacobians))
    fine = np.linspace(0.0, tr.T, 4 * tr.steps + 1)
    vals = []
    for t in fine:
        # discrete solution linear in time between nodes
        U = np.array([np.interp(t, tr.times, tr.u[:, j]) for j in range(tr.u.shape[1])])
        sq = (U[:, None] - ms.u(xq, t)) ** 2  # DG0 basis value 1
        vals.append(float(np.einsum("fq,q,f->", sq, w, det)))
    h = fine[1] - fine[0]
    simpson = h / 3 * (vals[0] + vals[-1] + 4 * sum(vals[1:-1:2]) + 2 * sum(vals[2:-1:2]))
    assert err.norm_u == pytest.approx(math.sqrt(simpson), rel=1e-2)


def test_field_errors_zero_solution(rt0_level3):
    op, ss = rt0_level3
    ms = manufactured("elliptic-zero")
    U, S = elliptic_projection(ss, ms.laplacian_u, 0.0)
    assert all(v == 0.0 for v in field_errors(op, ms, U, S).values())


# -- error splitting ---------------------------------------------------------


def test_initial_splitting_and_triangle_inequality(rt0_level3, heat_run):
    op, ss = rt0_level3
    ms, tr = heat_run
    proj = elliptic_projections(tr, ms, ss)
    rho, theta, eps = error_decomposition(tr, ms, ss, projections=proj)
    assert theta[0] <= 1e-10 and eps[0] <= 1e-9
    _, nodes = bochner_error(tr, ms, op, per_node=True)
    assert np.all(nodes["u"] <= rho + theta + 1e-10)


def test_rho_vanishes_for_zero_solution(rt0_level3):
    op, ss = rt0_level3
    ms = from_expression("0", "heat")
    tr = run_parabolic(ss, None, np.zeros(op.A.shape[0]), time_grid(0.1, 0.05))
    rho, theta, eps = error_decomposition(tr, ms, ss)
    assert np.all(rho <= 1e-12) and np.all(theta == 0) and np.all(eps == 0)


def test_splitting_residual_vanishes_for_steady_solution(rt0_level3):
    op, ss = rt0_level3
    ms = manufactured("heat-steady")
    g_h, _ = elliptic_projection(ss, ms.laplacian_u, 0.0)
    tr = run_parabolic(ss, LoadAssembler(ms.f, op.s_u), g_h, time_grid(0.1, 0.02))
    assert np.max(splitting_residual(tr, ms, ss)) <= 1e-10


# -- wave estimate terms -----------------------------------------------------


def test_E1_zero_for_representable_data(rt0_level3):
    op, _ = rt0_level3
    ms = from_expression("0", "wave")
    E1, E2, E3 = hyperbolic_error_terms(ms, op, np.zeros(op.A.shape[0]),
                                        np.zeros(op.D.shape[0]), 0.5)
    assert (E1, E2, E3) == (0.0, 0.0, 0.0)


def test_E2_standing_wave(rt0_level3):
    op, _ = rt0_level3
    ms = manufactured("wave-standing")
    mu0 = canonical_interpolation(op.s_u, ms.u1)
    s0 = canonical_interpolation(op.s_sigma, ms.grad_u0)
    _, E2, _ = hyperbolic_error_terms(ms, op, mu0, s0, 0.5, s=0)
    assert E2 == pytest.approx(math.pi / math.sqrt(2), rel=1e-8)
    _, E2s1, _ = hyperbolic_error_terms(ms, op, mu0, s0, 0.5, s=1)
    assert E2s1 == pytest.approx(math.sqrt(math.pi**2 / 2 + math.pi**4), rel=1e-8)


def test_E3_closed_form(rt0_level3):
    # ||u_t||^2 = (pi^2/2) sin^2(wt) and ||grad u||^2 = (pi^2/2) cos^2(wt), w = sqrt(2) pi
    op, _ = rt0_level3
    ms = manufactured("wave-standing")
    T = 0.5
    w = math.sqrt(2) * math.pi
    sin2 = T / 2 - math.sin(2 * w * T) / (4 * w)
    cos2 = T - sin2
    E3_exact = math.sqrt(math.pi**2 / 2 * sin2) + math.sqrt(math.pi**2 / 2 * cos2)
    _, _, E3 = hyperbolic_error_terms(ms, op, np.zeros(op.A.shape[0]),
                                      np.zeros(op.D.shape[0]), T)
    assert E3 == pytest.approx(E3_exact, abs=1e-6)


def test_fd_sobolev_fallback():
    m = refine_uniform(unit_square_mesh(), 3)
    ms = manufactured("heat-steady")
    exact = sobolev_norm(m, [ms.partials("u", k) for k in range(3)])
    fd = sobolev_norm(m, [_fd_partials(ms.u, k) for k in range(3)])
    assert fd == pytest.approx(exact, rel=1e-5)


# -- reports -----------------------------------------------------------------


def _report(**kw):
    base = dict(
        problem="heat", pair="RT0/DG0", levels=[2, 3, 4], h=[0.4, 0.2, 0.1],
        errors={"u": [0.4, 0.2, 0.1], "sigma": [0.0, 0.0, 0.0], "div_sigma": [1.0, 1.0, 1.0]},
        predicted={"u": (1, "r=0"), "sigma": (1, "r=0 trimmed"), "div_sigma": (None, "-")},
        tolerance=0.15,
    )
    base.update(kw)
    return ConvergenceReport(**base)


def test_report_pass_logic():
    r = _report()
    assert r.eoc["u"] == [pytest.approx(1.0)] * 2
    assert r.eoc["sigma"] == [None, None]
    assert r.passed == {"u": True, "sigma": True}
    assert r.ok
    bad = _report(errors={"u": [0.4, 0.3, 0.25], "sigma": [0, 0, 0], "div_sigma": [1, 1, 1]})
    assert not bad.passed["u"] and not bad.ok
    assert not _report(checks={"initial_projection": False}).ok


def test_report_csv_and_json():
    r = _report(extra={"steps": [4, 16, 64]})
    rows = list(csv.reader(io.StringIO(r.to_csv())))
    assert rows[0] == ["level", "h", "u", "sigma", "div_sigma",
                       "eoc_u", "eoc_sigma", "eoc_div_sigma", "steps"]
    assert rows[1][5:8] == ["", "", ""]
    assert rows[2][6] == "exact"
    assert float(rows[3][2]) == 0.1 and rows[3][8] == "64"
    d = json.loads(r.to_json())
    assert d["predicted"]["u"] == {"order": 1, "branch": "r=0"}
    assert d["ok"] is True


def test_report_csv_numpy_scalars():
    r = _report(h=[np.float64(0.4), np.float64(0.2), np.float64(0.1)])
    assert "np." not in r.to_csv()


@pytest.mark.parametrize(
    "problem,sig,u,norm,order",
    [
        ("elliptic", "RT0", "DG0", "sigma", 1),
        ("elliptic", "BDM1", "DG0", "sigma", 2),
        ("elliptic", "RT1", "DG1", "u", 2),
        ("heat", "RT0", "DG0", "u", 1),
        ("heat", "BDM1", "DG0", "sigma", 1),
        ("heat", "RT1", "DG1", "u", 2),
        ("heat", "RT1", "DG1", "div_sigma", None),
        ("semilinear", "RT1", "DG1", "u", 1),
        ("wave", "RT0", "DG0", "mu_sigma", 1),
        ("wave", "RT0", "DG0", "mu", None),
    ],
)
def test_predicted_orders(problem, sig, u, norm, order):
    assert predicted_orders(problem, sig, u)[norm][0] == order


def test_predicted_orders_steady_flux_branch():
    assert predicted_orders("heat", "BDM1", "DG0", lap_ut_zero=True)["sigma"][0] == 2
    assert predicted_orders("heat", "RT0", "DG0", lap_ut_zero=True)["sigma"][0] == 1
    with pytest.raises(ConfigurationError):
        predicted_orders("heat", "RT0", "DG1")
    with pytest.raises(ConfigurationError):
        predicted_orders("maxwell", "RT0", "DG0")
