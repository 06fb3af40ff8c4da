import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hicon.bloch import BlochData, bloch_eigs
from hicon.errors import GridError, PoleError
from hicon.zhikov import ZhikovFunction, check_grid, find_band_gaps, sym2_eigvalsh, write_beta_csv


@pytest.fixture(scope="module")
def real_fn(coarse_mesh, A):
    return ZhikovFunction(bloch_eigs(coarse_mesh, A, n=11))


def two_mode_gap_data():
    # x-polarised pole at 1 and y-polarised pole at 1.05, both with |<phi>|^2 = 1/4:
    # beta_x < 0 on (1, 4/3) and beta_y < 0 on (1.05, 1.4), so the gap is (1.05, 4/3)
    return BlochData.synthetic([1.0, 1.05], [[0.5, 0.0], [0.0, 0.5]], soft_area=1.0)


@given(st.floats(0.01, 0.9), st.floats(0.0, 3.0).filter(lambda z: abs(z - 1.0) > 1e-3), st.floats(0, 2 * np.pi))
def test_single_mode_closed_form(m2, z, angle):
    m = np.sqrt(m2) * np.array([np.cos(angle), np.sin(angle)])
    fn = ZhikovFunction(BlochData.synthetic([1.0], [m]))
    expected = sorted([z, z + z**2 * m2 / (1.0 - z)])
    np.testing.assert_allclose(fn.betas([z])[0], expected, rtol=1e-10, atol=1e-12)


def test_vanishes_at_zero(real_fn):
    assert np.abs(real_fn.matrices([0.0])).max() == 0.0


def test_derivative_matches_finite_differences(real_fn):
    z = np.linspace(1.0, 0.9 * real_fn.poles[0], 7)
    h = 1e-4
    fd = (real_fn.matrices(z + h) - real_fn.matrices(z - h)) / (2 * h)
    np.testing.assert_allclose(real_fn.derivative(z), fd, rtol=1e-6)


def test_derivative_positive_definite_everywhere(real_fn):
    # B' >= I - sum <phi><phi>^T >= (1 - |Y_soft|) I by Bessel's inequality
    hi = 1.2 * real_fn.poles[-1]
    z = np.linspace(0.0, hi, 200)
    z = z[np.min(np.abs(z[:, None] - real_fn.poles[None, :]), axis=1) > 1e-6 * hi]
    lo = np.linalg.eigvalsh(real_fn.derivative(z))[:, 0]
    assert lo.min() >= 1.0 - real_fn.data.soft_area - 1e-12


def test_betas_increase_between_poles(real_fn):
    edges = np.concatenate([[0.0], real_fn.poles, [1.2 * real_fn.poles[-1]]])
    for a, b in zip(edges[:-1], edges[1:]):
        if b - a < 1e-6:
            continue
        z = np.linspace(a + 1e-6 * (b - a), b - 1e-6 * (b - a), 60)
        assert np.all(np.diff(real_fn.betas(z), axis=0) > 0)


def test_truncation_is_weyl_monotone(coarse_mesh, A):
    data = bloch_eigs(coarse_mesh, A, n=11)
    full, cut = ZhikovFunction(data), ZhikovFunction(data.truncated(5))
    z = np.linspace(0.0, 0.99 * data.etas[5], 80)
    z = z[np.min(np.abs(z[:, None] - data.etas[None, :5]), axis=1) > 1e-3]
    # the dropped modes add z^2 <phi><phi>^T / (eta - z) >= 0 below their poles
    assert np.all(full.betas(z) >= cut.betas(z) - 1e-9 * np.abs(cut.betas(z)).max())


def test_pole_hit_raises():
    fn = ZhikovFunction(two_mode_gap_data())
    with pytest.raises(PoleError):
        fn.matrices([1.05])


def test_no_mean_modes_give_no_poles():
    fn = ZhikovFunction(BlochData.synthetic([1.0, 2.0], [[0.0, 0.0], [1e-15, 0.0]], soft_area=0.01))
    assert fn.poles.size == 0
    np.testing.assert_allclose(fn.betas([1.0, 2.0]), [[1.0, 1.0], [2.0, 2.0]])


def test_near_pole_flag():
    fn = ZhikovFunction(two_mode_gap_data(), delta_pole=1e-3)
    assert fn.near_pole([0.9995, 1.2]).tolist() == [True, False]


def test_grid_validation():
    fn = ZhikovFunction(two_mode_gap_data())
    with pytest.raises(GridError):
        check_grid([0.0, 2.0, 1.0], fn)
    with pytest.raises(GridError):
        check_grid(np.linspace(0, 2, 20), fn)  # spacing far above the pole gap / 50
    check_grid(np.linspace(0, 2, 4001), fn)


def test_two_mode_gap_closed_form():
    data = two_mode_gap_data()
    z = np.linspace(0.0, 2.0, 8001)[1:]
    z = z[(np.abs(z - 1.0) > 1e-9) & (np.abs(z - 1.05) > 1e-9)]
    gaps = find_band_gaps(z, data, xtol=1e-12)
    assert len(gaps) == 1
    np.testing.assert_allclose(gaps[0], (1.05, 4.0 / 3.0), rtol=1e-9)


def test_no_gap_for_shipped_geometry(real_fn):
    # each pole opens a negative window for a single polarisation only
    z = np.linspace(0.0, 1.2 * real_fn.poles[-1], 200001)[1:]
    z = z[np.min(np.abs(z[:, None] - real_fn.poles[None, :]), axis=1) > 1e-10 * z.max()]
    assert find_band_gaps(z, real_fn.data, fn=real_fn) == []


@given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6), st.floats(-1e6, 1e6))
def test_sym2_eigvalsh_matches_lapack(a, b, d):
    lo, hi = sym2_eigvalsh(a, b, d)
    ref = np.linalg.eigvalsh(np.array([[a, b], [b, d]]))
    scale = max(abs(a), abs(b), abs(d), 1e-300)
    np.testing.assert_allclose([lo, hi], ref, atol=1e-12 * scale)


def test_sym2_small_eigenvalue_relative_accuracy():
    # det/tr route keeps the tiny eigenvalue accurate where tr/2 - r cancels
    a, b, d = 1.0, 1.0 - 1e-9, 1.0
    lo, hi = sym2_eigvalsh(a, b, d)
    assert lo == pytest.approx(1e-9, rel=1e-6)


def test_beta_csv(tmp_path):
    fn = ZhikovFunction(two_mode_gap_data())
    write_beta_csv(tmp_path / "b.csv", np.array([0.5, 1.2]), fn, header="# h\n")
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0] == "# h" and lines[1] == "z,beta1,beta2,near_pole" and len(lines) == 4
