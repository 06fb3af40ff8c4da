"""Perforated-cell correctors and the macroscopic elasticity tensor."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from . import kernels
from .errors import SolveError
from .fem import DofMap, HermitianSystem, assemble_stiffness, build_dofmap
from .mesh import TriMesh
from .tensor import ElasticTensor, to_voigt

VOIGT_BASIS = np.eye(3)


@dataclass(frozen=True, eq=False)
class CorrectorField:
    """Periodic, mean-zero corrector ``u_E`` for the strain ``E`` (Voigt)."""

    strain: np.ndarray
    u: np.ndarray
    dofmap: DofMap = field(repr=False)
    residual: float = 0.0


@dataclass(frozen=True, eq=False)
class MacroTensor:
    """Macroscopic tensor in Voigt form.

    ``voigt_raw`` keeps the two independently computed halves; ``voigt`` is
    its symmetric part, used downstream.
    """

    voigt_raw: np.ndarray
    stiff_area: float
    provenance: str = ""

    @property
    def voigt(self) -> np.ndarray:
        return 0.5 * (self.voigt_raw + self.voigt_raw.T)

    @property
    def asymmetry(self) -> float:
        """``max |A - A^T| / max |A|``."""
        return float(np.abs(self.voigt_raw - self.voigt_raw.T).max() / np.abs(self.voigt_raw).max())

    @property
    def margin(self) -> float:
        """Smallest eigenvalue of the symmetric Voigt matrix."""
        return float(np.linalg.eigvalsh(self.voigt)[0])

    def tensor(self) -> ElasticTensor:
        return ElasticTensor(self.voigt)

    def to_dict(self) -> dict:
        return {
            "voigt": self.voigt.tolist(),
            "voigt_raw": self.voigt_raw.tolist(),
            "eta": self.margin,
            "asymmetry": self.asymmetry,
            "stiff_area": self.stiff_area,
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MacroTensor":
        return cls(np.array(d["voigt_raw"], dtype=float), float(d["stiff_area"]), d.get("provenance", ""))

    def write_json(self, path, header: dict | None = None) -> None:
        payload = dict(header or {})
        payload.update(self.to_dict())
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


class CorrectorSolver:
    """Factorises the stiff-region saddle system once and solves for any strain.

    The corrector solves ``int A (sym grad u + E) : sym grad v = 0`` for all
    periodic ``v`` with two Lagrange multipliers enforcing ``int u = 0``.
    """

    def __init__(self, mesh: TriMesh, A_stiff: ElasticTensor, order: int = 2, dofmap: DofMap | None = None):
        self.mesh = mesh
        self.A = A_stiff
        self.dofmap = dofmap or build_dofmap(mesh, "stiff", order=order, periodic=True, mean_zero=True)
        self.system: HermitianSystem = assemble_stiffness(mesh, A_stiff, (0.0, 0.0), "stiff", self.dofmap, with_mass=False)
        elements = np.flatnonzero(mesh.region_mask("stiff"))
        coords = mesh.vertices[mesh.triangles[elements]]
        self._G = kernels.element_strain_integrals(coords, self.dofmap.order)
        self._dofs = self.dofmap.element_dofs(elements)
        self.C = self.system.C.toarray()
        self.stiff_area = mesh.region_area("stiff")
        # Periodic K is singular only along the two translations, which the
        # multiplier rows remove. Pinning one node gives a nonsingular sparse
        # block; the saddle solution is that solution shifted to mean zero.
        K = self.system.K.tocsc()
        keep = np.ones(K.shape[0], dtype=bool)
        keep[:2] = False
        self._keep = keep
        try:
            self._lu = spla.splu(K[keep][:, keep], permc_spec="MMD_AT_PLUS_A")
        except RuntimeError as exc:
            raise SolveError(f"corrector system is singular: {exc}") from exc

    def coupling(self, strain) -> np.ndarray:
        """``g_E = int B_grad^T A E`` over the stiff region (length n_dofs)."""
        ge = self._G @ (self.A.voigt @ _as_voigt(strain))
        g = np.zeros(self.dofmap.n_dofs)
        keep = self._dofs >= 0
        np.add.at(g, self._dofs[keep], ge[keep])
        return g

    def solve(self, strain) -> CorrectorField:
        E = _as_voigt(strain)
        g = self.coupling(E)
        u = np.zeros(self.dofmap.n_dofs)
        u[self._keep] = self._lu.solve(-g[self._keep])
        # remove the mean of each component: C u = 0
        for c in range(2):
            u[c::2] -= (self.C[c] @ u) / self.stiff_area
        if not np.all(np.isfinite(u)):
            raise SolveError("corrector solve produced non-finite values")
        return CorrectorField(E, u, self.dofmap, self.saddle_residual(u, g))

    def saddle_residual(self, u, g) -> float:
        """Relative residual of the Lagrange system ``[[K, C^T], [C, 0]] [u; 0] = [-g; 0]``."""
        r1 = self.system.K @ u + g
        r2 = self.C @ u
        scale = max(np.linalg.norm(g), np.abs(self.system.K).max() * max(np.linalg.norm(u), 1e-300), 1e-300)
        return float(np.sqrt(np.linalg.norm(r1) ** 2 + np.linalg.norm(r2) ** 2) / scale)

    def energy(self, a: CorrectorField, b: CorrectorField) -> float:
        """``int A (sym grad u_a + E_a) : (sym grad u_b + E_b)`` over the stiff region."""
        K = self.system.K
        return float(
            a.u @ (K @ b.u)
            + a.u @ self.coupling(b.strain)
            + self.coupling(a.strain) @ b.u
            + self.stiff_area * a.strain @ self.A.voigt @ b.strain
        )


def _as_voigt(strain) -> np.ndarray:
    s = np.asarray(strain, dtype=float)
    if s.shape == (2, 2):
        if abs(s[0, 1] - s[1, 0]) > 1e-14 * max(np.abs(s).max(), 1e-300):
            raise ValueError("strain must be symmetric")
        return to_voigt(s)
    if s.shape != (3,):
        raise ValueError(f"strain must be a 2x2 matrix or a Voigt 3-vector, got shape {s.shape}")
    return s


def solve_corrector(mesh: TriMesh, A_stiff: ElasticTensor, E, order: int = 2) -> CorrectorField:
    """Corrector for a single strain ``E`` (2x2 symmetric or Voigt 3-vector)."""
    return CorrectorSolver(mesh, A_stiff, order).solve(E)


def assemble_macro(mesh: TriMesh, A_stiff: ElasticTensor, order: int = 2, solver: CorrectorSolver | None = None) -> MacroTensor:
    """Macroscopic tensor from the energy form of the three basis correctors.

    Entry ``(i, j)`` and ``(j, i)`` are evaluated separately, so the
    asymmetry of the raw matrix measures the accuracy of the solves.
    """
    solver = solver or CorrectorSolver(mesh, A_stiff, order)
    fields = [solver.solve(e) for e in VOIGT_BASIS]
    raw = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            raw[i, j] = solver.energy(fields[i], fields[j])
    h = hashlib.sha256((mesh.digest() + A_stiff.voigt.tobytes().hex() + str(order)).encode()).hexdigest()[:16]
    return MacroTensor(raw, solver.stiff_area, h)
