import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from hypothesis import given
from hypothesis import strategies as st

from hicon.macro import CorrectorField, CorrectorSolver, MacroTensor, assemble_macro
from hicon.mesh import Geometry, build_unit_cell_mesh, refine, uniform_mesh
from hicon.tensor import ElasticTensor


@pytest.fixture(scope="module")
def solver(coarse_mesh):
    return CorrectorSolver(coarse_mesh, ElasticTensor.isotropic(1.0, 0.1))


@pytest.fixture(scope="module")
def macro(coarse_mesh, solver):
    return assemble_macro(coarse_mesh, solver.A, solver=solver)


def test_no_inclusion_gives_the_tensor_itself(A):
    m = assemble_macro(uniform_mesh(4), A)
    np.testing.assert_allclose(m.voigt, A.voigt, atol=1e-13)


def test_symmetric_positive_and_orthotropic(macro):
    assert macro.asymmetry < 1e-10
    assert macro.margin > 0
    # the ellipse is reflection symmetric: shear decouples from normal strains
    assert np.abs(macro.voigt[:2, 2]).max() < 1e-6


def test_energy_bound_by_stiff_average(macro, A):
    # removing material can only soften: A_macro <= |Y_stiff| A
    gap = np.linalg.eigvalsh(macro.stiff_area * A.voigt - macro.voigt)
    assert gap.min() >= -1e-12


def test_dilute_softening_proportional_to_hole_area(A):
    # for a small hole the loss of stiffness is linear in its area
    rates = []
    for r in (0.04, 0.04 / np.sqrt(2), 0.02):
        mesh = build_unit_cell_mesh(Geometry(a=r, b=r, target_h=0.05, boundary_segments=64))
        loss = A.voigt - assemble_macro(mesh, A).voigt
        rates.append(loss / mesh.region_area("soft"))
    np.testing.assert_allclose(rates[1], rates[0], rtol=0.03, atol=1e-12)
    np.testing.assert_allclose(rates[2], rates[0], rtol=0.03, atol=1e-12)


def test_saddle_residual_small(solver):
    for e in np.eye(3):
        assert solver.solve(e).residual < 1e-10


def test_corrector_agrees_with_direct_saddle_solve(small_mesh, A):
    # second route: the full Lagrange system through a generic sparse solver
    s = CorrectorSolver(small_mesh, A)
    E = np.array([0.3, -0.2, 0.5])
    f = s.solve(E)
    sol = spla.spsolve(s.system.saddle().tocsc(), np.concatenate([-s.coupling(E), np.zeros(2)]))
    np.testing.assert_allclose(f.u, sol[:-2], atol=1e-10 * np.abs(sol).max())
    assert np.abs(sol[-2:]).max() < 1e-10


def test_corrector_minimises_energy(solver, rng):
    E = np.array([1.0, 0.0, 0.0])
    f = solver.solve(E)
    base = solver.energy(f, f)
    for _ in range(3):
        du = 1e-3 * rng.standard_normal(f.u.shape)
        g = CorrectorField(E, f.u + du, f.dofmap)
        assert solver.energy(g, g) > base


@given(st.lists(st.floats(-2, 2, allow_nan=False), min_size=6, max_size=6))
def test_corrector_linear_in_strain(solver, coeffs):
    a, b = np.array(coeffs[:3]), np.array(coeffs[3:])
    ua, ub, uab = solver.solve(a).u, solver.solve(b).u, solver.solve(a + b).u
    np.testing.assert_allclose(uab, ua + ub, atol=1e-10 * (1 + np.abs(uab).max()))


def test_mean_zero_corrector(solver):
    f = solver.solve(np.array([0.0, 1.0, 0.0]))
    assert np.abs(solver.C @ f.u).max() < 1e-13


def test_refinement_softens_monotonically_and_converges(coarse_mesh, macro, A):
    m1 = refine(coarse_mesh)
    a1 = assemble_macro(m1, A)
    a2 = assemble_macro(refine(m1), A)
    # nested spaces on a shrinking stiff region: the energy only decreases
    assert np.linalg.eigvalsh(macro.voigt - a1.voigt).min() >= -1e-12
    assert np.linalg.eigvalsh(a1.voigt - a2.voigt).min() >= -1e-12
    d01 = np.abs(macro.voigt - a1.voigt).max()
    d12 = np.abs(a1.voigt - a2.voigt).max()
    assert d12 < 0.5 * d01


def test_json_round_trip(tmp_path, macro):
    p = tmp_path / "m.json"
    macro.write_json(p, header={"stage": "macro"})
    import json

    back = MacroTensor.from_dict(json.loads(p.read_text()))
    assert np.array_equal(back.voigt_raw, macro.voigt_raw)


def test_asymmetric_strain_rejected(solver):
    with pytest.raises(ValueError):
        solver.solve(np.array([[1.0, 0.5], [0.0, 1.0]]))
