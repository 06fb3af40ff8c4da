import numpy as np
import pytest
from hypothesis import settings

from hicon.mesh import Geometry, build_unit_cell_mesh, refine
from hicon.tensor import ElasticTensor

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

LAM, MU = 1.0, 0.1
# coarse far field, fine interface: the geometry shipped in configs/ellipse.yaml
SHIPPED_GEOMETRY = Geometry(center=(0.5, 0.5), a=0.04, b=0.045, target_h=0.05, boundary_segments=64)


@pytest.fixture(scope="session")
def A():
    return ElasticTensor.isotropic(LAM, MU)


@pytest.fixture(scope="session")
def coarse_mesh():
    return build_unit_cell_mesh(SHIPPED_GEOMETRY)


@pytest.fixture(scope="session")
def fine_mesh(coarse_mesh):
    return refine(coarse_mesh)


@pytest.fixture(scope="session")
def small_mesh():
    """Quick mesh (16-gon inclusion) for dense-oracle comparisons."""
    return build_unit_cell_mesh(Geometry(a=0.2, b=0.15, target_h=0.12, boundary_segments=16))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# ---------------------------------------------------------------------------
# acceptance summary: tests/test_acceptance.py records one line per criterion

ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture
def report_acceptance(request):
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, {})

    def record(number: int, line: str) -> None:
        lines[number] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
