"""Invariant checks run by ``hicon validate`` on a coarse mesh."""
from __future__ import annotations

import math
import numpy as np

from .bloch import bloch_eigs
from .config import RunConfig
from .dispersion import branch_counts, default_theta_grid, determinant_residual, direction_stiffness, dispersion_branches, group_velocity_check
from .errors import HiconError
from .fem import assemble_mass, assemble_stiffness, build_dofmap
from .macro import assemble_macro
from .mesh import build_unit_cell_mesh, validate_mesh
from .pipeline import make_z_grid, pole_hits
from .steklov import dtn_schur, energy_identity_residual, steklov_eigs
from .tensor import ElasticTensor
from .zhikov import ZhikovFunction

Row = tuple[str, bool, str]


def run_validation(cfg: RunConfig) -> list[Row]:
    """Run every structural check on the unrefined mesh; failures become rows."""
    rows: list[Row] = []

    def check(name, fn):
        try:
            ok, detail = fn()
        except HiconError as exc:
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        rows.append((name, bool(ok), detail))
        return ok

    lam, mu = cfg.lame
    check("lame_nonnegative", lambda: (lam >= 0 and mu > 0, f"lambda={lam:g}, mu={mu:g}"))
    A = ElasticTensor.isotropic(lam, mu)
    if not check("tensor_positive_definite", lambda: (A.is_positive_definite(), f"min eig {A.min_eigenvalue:.3e}")):
        return rows

    mesh = None

    def m():
        nonlocal mesh
        mesh = build_unit_cell_mesh(cfg.geometry)
        validate_mesh(mesh)
        g = cfg.geometry
        err = mesh.region_area("soft") / (math.pi * g.a * g.b) - 1
        return abs(err) < 0.02, f"{len(mesh.triangles)} triangles, soft-area error {err:+.2e}"

    if not check("mesh", m):
        return rows
    order = cfg.element_order

    def herm():
        s = assemble_stiffness(mesh, A, (0.3, -0.7), "all", build_dofmap(mesh, "all", order))
        r = s.hermiticity_residual()
        return r <= 1e-12, f"residual {r:.1e}"

    check("stiffness_hermitian", herm)

    def kernel():
        dm = build_dofmap(mesh, "all", order)
        s = assemble_stiffness(mesh, A, (0, 0), "all", dm, with_mass=False)
        u = np.tile([1.0, -2.0], dm.n_free_nodes)
        r = np.abs(s.K @ u).max()
        return r <= 1e-10, f"|K 1| = {r:.1e}"

    check("translations_in_kernel", kernel)

    data = None

    def bl():
        nonlocal data
        data = bloch_eigs(mesh, A, cfg.n_modes, order, cfg.tolerances.rtol, cfg.seed)
        norm = data.eigenset.orthonormality_error(assemble_mass(mesh, "soft", data.dofmap))
        ok = data.etas[0] > 0 and norm <= 1e-8 and np.all(np.abs(data.means) <= math.sqrt(data.soft_area) + 1e-12)
        return ok, f"eta_1={data.etas[0]:.6g}, M-orthonormality {norm:.1e}"

    if not check("bloch_spectrum", bl):
        return rows

    macro = None

    def mc():
        nonlocal macro
        macro = assemble_macro(mesh, A, order)
        bound = np.linalg.eigvalsh(A.voigt * macro.stiff_area - macro.voigt)[0]
        ok = macro.asymmetry <= 1e-10 and macro.margin > 0 and bound >= -1e-12
        return ok, f"asymmetry {macro.asymmetry:.1e}, margin {macro.margin:.4g}"

    if not check("macro_tensor", mc):
        return rows

    t = cfg.tolerances
    fn = ZhikovFunction(data, t.delta_pole, t.mean_rel)
    def grid():
        z = make_z_grid(cfg.z_grid, data, fn)
        hits = pole_hits(z, fn)
        return hits.size == 0, f"{len(z)} points, {hits.size} on a pole"

    if not check("z_grid_avoids_poles", grid):
        return rows
    z = make_z_grid(cfg.z_grid, data, fn)

    def zh():
        B0 = fn.matrices([0.0])[0]
        ok0 = np.array_equal(B0, np.zeros((2, 2)))
        D = fn.derivative(z)
        pd = np.all(np.linalg.eigvalsh(D)[:, 0] > 0)
        betas = fn.betas(z)
        ids = fn.interval_ids(z)
        mono = all(np.all(np.diff(betas[ids == i], axis=0) > 0) for i in np.unique(ids))
        return ok0 and pd and mono, f"B(0)=0: {ok0}, B' > 0: {pd}, monotone: {mono}"

    check("zhikov_function", zh)

    def disp():
        worst, velocity_ok, count_ok = 0.0, True, True
        eps = cfg.epsilons[0]
        for theta in default_theta_grid(8):
            ds = direction_stiffness(macro, theta)
            brs = dispersion_branches(z, theta, eps, tol_gap=t.tol_gap, fn=fn, ds=ds)
            n_at = {}
            for b in brs:
                for zi in b.z:
                    n_at[zi] = n_at.get(zi, 0) + 1
                for zi, c in zip(b.z, b.chi_norm):
                    r, s = determinant_residual(zi, c, eps, ds, fn)
                    worst = max(worst, r / s)
                velocity_ok &= group_velocity_check(b).ok
            counts = branch_counts(z, fn, t.tol_gap)
            count_ok &= all(n_at.get(zi, 0) == c for zi, c in zip(z, counts))
        return count_ok and velocity_ok and worst <= 1e-8, f"counts {count_ok}, velocities {velocity_ok}, det residual {worst:.1e}"

    check("dispersion", disp)

    def stk():
        d = dtn_schur(mesh, A, (0.0, 0.0), order)
        nu = steklov_eigs(d, 3).values
        scale = np.abs(d.S).max()
        rel = energy_identity_residual(d)
        ok = np.all(np.abs(nu[:2]) <= 1e-8 * scale) and nu[2] > 1e-8 * scale and rel <= 1e-9
        return ok, f"-nu = {nu[0]:.1e}, {nu[1]:.1e}, {nu[2]:.4g}; energy identity {rel:.1e}"

    check("steklov_dtn", stk)
    return rows
