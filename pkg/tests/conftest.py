import numpy as np
import pytest

from feec_evolve.assembly import ADMISSIBLE_PAIRS, assemble_mixed
from feec_evolve.elements import build_space
from feec_evolve.mesh import SimplicialMesh, refine_uniform, unit_square_mesh

PAIR_IDS = [f"{s}/{u}" for s, u in ADMISSIBLE_PAIRS]


@pytest.fixture(scope="session")
def square():
    return unit_square_mesh()


@pytest.fixture(scope="session")
def mesh2():
    return refine_uniform(unit_square_mesh(), 2)


@pytest.fixture(scope="session")
def reference_mesh():
    return SimplicialMesh.from_triangles([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])


@pytest.fixture(scope="session")
def perturbed_mesh():
    """Level-2 mesh with interior vertices jittered so no two triangles are congruent."""
    m = refine_uniform(unit_square_mesh(), 2)
    v = m.vertices.copy()
    interior = np.all((v > 1e-12) & (v < 1 - 1e-12), axis=1)
    rng = np.random.default_rng(7)
    v[interior] += rng.uniform(-0.04, 0.04, size=(interior.sum(), 2))
    return SimplicialMesh.from_triangles(v, m.triangles, level=2)


@pytest.fixture(scope="session", params=ADMISSIBLE_PAIRS, ids=PAIR_IDS)
def pair_op(request, perturbed_mesh):
    s, u = request.param
    return assemble_mixed(build_space(perturbed_mesh, s), build_space(perturbed_mesh, u))


# one line per acceptance criterion, collected by tests/test_acceptance.py
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
