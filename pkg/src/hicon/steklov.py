"""Discrete Dirichlet-to-Neumann map of the stiff region and Steklov asymptotics.

The DtN matrix ``S(chi)`` is the Schur complement of the periodic stiff-region
stiffness onto the interface DOFs. It represents minus the stiff DtN map,
so its Steklov eigenvalues ``-nu_n`` are non-negative. For small ``chi`` two
of them (one per displacement component) behave like ``|chi|^2`` and follow
``-Lambda_hom = |chi|^2 |Gamma|^-1 A_theta``.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dispersion import _voigt_of, direction_stiffness, unit_direction
from .eigen import EigenSet, smallest_eigenpairs
from .errors import FactorizationError
from .fem import NodeLayout, assemble_boundary_mass, assemble_stiffness, build_dofmap, interface_dofmap
from .mesh import TriMesh
from .tensor import ElasticTensor, x_chi_matrix

SCHUR_CHUNK = 64


@dataclass(frozen=True, eq=False)
class DtnMatrix:
    """``S = K_GG - K_GI K_II^-1 K_IG`` with the interface mass ``M_gamma``.

    ``K`` is kept (sparse, full stiff-region system) together with the index
    split so the harmonic lift can be recomputed independently.
    """

    chi: tuple[float, float]
    S: np.ndarray
    M_gamma: np.ndarray
    gamma_length: float
    K: sp.csr_matrix = field(repr=False)
    gamma_dofs: np.ndarray = field(repr=False)
    interior_dofs: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.S.shape[0]

    def hermiticity_residual(self) -> float:
        return float(np.abs(self.S - self.S.conj().T).max() / max(np.abs(self.S).max(), 1e-300))

    def lift(self, g: np.ndarray) -> np.ndarray:
        """Full stiff-region vector(s) whose trace is ``g`` and which are discrete-harmonic.

        Uses a direct sparse solve, independent of the factorisation behind ``S``.
        """
        g = np.asarray(g)
        K = self.K
        I, G = self.interior_dofs, self.gamma_dofs
        rhs = -(K[I][:, G] @ g)
        uI = spla.spsolve(sp.csc_matrix(K[I][:, I]), rhs)
        u = np.zeros((K.shape[0],) + g.shape[1:], dtype=np.result_type(K.dtype, g.dtype))
        u[I] = uI.reshape(rhs.shape)
        u[G] = g
        return u

    def lift_energy(self, g: np.ndarray) -> np.ndarray:
        """``a_chi(Pi g, Pi g)`` per column of ``g`` from the explicit lift."""
        g2 = np.asarray(g).reshape(self.n, -1)
        u = self.lift(g2)
        return np.real(np.einsum("ij,ij->j", u.conj(), self.K @ u))


def dtn_schur(
    mesh: TriMesh,
    A_stiff: ElasticTensor,
    chi,
    order: int = 2,
    layout: NodeLayout | None = None,
    chunk: int = SCHUR_CHUNK,
) -> DtnMatrix:
    """Schur-complement DtN matrix on the interface for quasimomentum ``chi``."""
    layout = layout if layout is not None and layout.order == order else NodeLayout(mesh, order)
    dm = build_dofmap(mesh, "stiff", order=order, periodic=True, layout=layout)
    system = assemble_stiffness(mesh, A_stiff, chi, "stiff", dm, with_mass=False)
    K = system.K.tocsr()
    gfree = dm.node_to_free[layout.interface_nodes]
    if np.any(gfree < 0):
        raise FactorizationError("interface node is missing from the stiff DOF map")
    G = np.empty(2 * len(gfree), dtype=np.int64)
    G[0::2] = 2 * gfree
    G[1::2] = 2 * gfree + 1
    mask = np.ones(K.shape[0], dtype=bool)
    mask[G] = False
    I = np.flatnonzero(mask)

    KGG = K[G][:, G].toarray()
    KIG = K[I][:, G].tocsc()
    KGI = K[G][:, I].tocsr()
    try:
        lu = spla.splu(sp.csc_matrix(K[I][:, I]), permc_spec="MMD_AT_PLUS_A")
    except RuntimeError as exc:
        raise FactorizationError(f"interior block K_II is singular: {exc}") from exc
    S = KGG.astype(np.result_type(KGG.dtype, lu.solve(np.zeros(len(I))).dtype), copy=True)
    for c0 in range(0, len(G), chunk):
        cols = slice(c0, min(c0 + chunk, len(G)))
        X = lu.solve(KIG[:, cols].toarray().astype(S.dtype))
        S[:, cols] -= KGI @ X
    if not np.all(np.isfinite(S)):
        raise FactorizationError("Schur complement contains non-finite entries")

    idm = interface_dofmap(mesh, order, layout)
    M_gamma = assemble_boundary_mass(mesh, idm).toarray()
    return DtnMatrix(
        chi=system.chi,
        S=S,
        M_gamma=M_gamma,
        gamma_length=mesh.interface_length,
        K=K,
        gamma_dofs=G,
        interior_dofs=I,
    )


def steklov_eigs(dtn: DtnMatrix, k: int = 4, rtol: float = 1e-9, seed: int = 0) -> EigenSet:
    """The ``k`` smallest eigenvalues ``-nu_n`` of the pencil ``(S, M_gamma)``.

    Values in ``[-1e-8 |S|, 0)`` are rounding noise around zero and clamped.
    """
    S = 0.5 * (dtn.S + dtn.S.conj().T)
    es = smallest_eigenpairs(S, dtn.M_gamma, k, rtol=rtol, seed=seed)
    floor = 1e-8 * np.abs(S).max()
    vals = np.where((es.values < 0) & (es.values >= -floor), 0.0, es.values)
    return EigenSet(vals, es.vectors, es.residuals, dict(es.metadata, chi=dtn.chi))


def energy_identity_residual(dtn: DtnMatrix, n_fields: int = 4, seed: int = 0) -> float:
    """Largest relative gap between ``g^H S g`` and the energy of the explicit harmonic lift."""
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((dtn.n, n_fields)) + 1j * rng.standard_normal((dtn.n, n_fields))
    quad = np.real(np.einsum("ij,ij->j", g.conj(), dtn.S @ g))
    lifted = dtn.lift_energy(g)
    return float(np.max(np.abs(quad - lifted) / np.abs(lifted)))


def dtn_hom(A_macro, chi, gamma_length: float) -> np.ndarray:
    """``Lambda_hom = -|Gamma|^-1 (i X_chi)^* A_macro (i X_chi)`` (real, 2x2, negative semi-definite)."""
    X = x_chi_matrix(chi)
    L = -(X.T @ _voigt_of(A_macro) @ X) / gamma_length
    return 0.5 * (L + L.T)


def constant_rayleigh(dtn: DtnMatrix, c) -> float:
    """Rayleigh quotient of ``(S, M_gamma)`` for the constant boundary field ``c``."""
    c = np.asarray(c, dtype=complex).reshape(2)
    g = np.tile(c, dtn.n // 2)
    return float(np.real(np.vdot(g, dtn.S @ g)) / np.real(np.vdot(g, dtn.M_gamma @ g)))


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    x, y = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    return float(np.polyfit(x, y, 1)[0])


@dataclass
class StudyReport:
    theta: np.ndarray
    chi_norms: np.ndarray
    nus: np.ndarray  # (n_chi, k) values of -nu, ascending
    hom: np.ndarray  # (n_chi, 2) eigenvalues of |chi|^-2 (-Lambda_hom)
    err: np.ndarray
    rayleigh: np.ndarray  # (n_chi, 2) quotients for the constant fields e1, e2
    energy_residual: float = float("nan")

    @property
    def slope_err(self) -> float:
        return loglog_slope(self.chi_norms, self.err)

    @property
    def slopes_nu(self) -> tuple[float, float]:
        return loglog_slope(self.chi_norms, self.nus[:, 0]), loglog_slope(self.chi_norms, self.nus[:, 1])

    @property
    def rayleigh_constants(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-sample lower/upper constants ``R / |chi|^2``."""
        q = self.rayleigh / self.chi_norms[:, None] ** 2
        return q.min(axis=1), q.max(axis=1)

    def to_dict(self) -> dict:
        s1, s2 = self.slopes_nu
        c_lo, c_hi = self.rayleigh_constants
        return {
            "theta": self.theta.tolist(),
            "chi_norms": self.chi_norms.tolist(),
            "slope_nu1": s1,
            "slope_nu2": s2,
            "slope_err": self.slope_err,
            "nu3": self.nus[:, 2].tolist() if self.nus.shape[1] > 2 else [],
            "err": self.err.tolist(),
            "rayleigh_c_lower": c_lo.tolist(),
            "rayleigh_c_upper": c_hi.tolist(),
            "energy_residual": self.energy_residual,
        }

    def write_csv(self, path, header: str = "", append: bool = False) -> None:
        with open(path, "a" if append else "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if not append:
                if header:
                    fh.write(header)
                w.writerow(["chi_norm", "theta_x", "theta_y", "nu1", "nu2", "nu3", "nu4", "hom_l1", "hom_l2", "err"])
            for c, nu, h, e in zip(self.chi_norms, self.nus, self.hom, self.err):
                nu4 = list(nu[:4]) + [float("nan")] * (4 - len(nu[:4]))
                w.writerow([f"{c:.17g}", f"{self.theta[0]:.17g}", f"{self.theta[1]:.17g}"] + [f"{v:.17g}" for v in nu4] + [f"{h[0]:.17g}", f"{h[1]:.17g}", f"{e:.17g}"])


def dtn_convergence_study(
    mesh: TriMesh,
    A_stiff: ElasticTensor,
    A_macro,
    chi_norms=(0.02, 0.04, 0.08, 0.16),
    theta=(1.0, 0.0),
    order: int = 2,
    k: int = 4,
    layout: NodeLayout | None = None,
) -> StudyReport:
    """Compare the two smallest Steklov eigenvalues with the homogenised DtN map.

    ``err(|chi|) = max_n | |chi|^-2 (-nu_n) - lambda_n(|chi|^-2 (-Lambda_hom)) |``.
    """
    chi_norms = np.asarray(chi_norms, dtype=float)
    if np.any(chi_norms <= 0) or np.any(chi_norms > 0.3):
        raise ValueError("|chi| values must lie in (0, 0.3]")
    t = unit_direction(theta)
    layout = layout if layout is not None and layout.order == order else NodeLayout(mesh, order)
    nus, hom, err, ray = [], [], [], []
    gamma = mesh.interface_length
    A_theta = direction_stiffness(A_macro, t).A
    h = np.linalg.eigvalsh(A_theta) / gamma
    energy_res = float("nan")
    for c in chi_norms:
        dtn = dtn_schur(mesh, A_stiff, c * t, order=order, layout=layout)
        if not np.isfinite(energy_res):
            energy_res = energy_identity_residual(dtn, n_fields=4)
        nu = steklov_eigs(dtn, k).values
        nus.append(nu)
        hom.append(h)
        err.append(float(np.max(np.abs(nu[:2] / c**2 - h))))
        ray.append([constant_rayleigh(dtn, (1.0, 0.0)), constant_rayleigh(dtn, (0.0, 1.0))])
    return StudyReport(t, chi_norms, np.array(nus), np.array(hom), np.array(err), np.array(ray), energy_res)


def write_rate_json(path, reports: list[StudyReport], header: dict | None = None) -> None:
    payload = dict(header or {})
    payload["studies"] = [r.to_dict() for r in reports]
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
