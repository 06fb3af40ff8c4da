"""Dirichlet spectrum of the soft inclusion and the mean vectors of its modes."""
from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field

import numpy as np

from .eigen import EigenSet, smallest_eigenpairs
from .fem import DofMap, assemble_load, assemble_stiffness, build_dofmap
from .mesh import TriMesh
from .tensor import ElasticTensor

CLUSTER_RTOL = 5e-3


@dataclass(frozen=True, eq=False)
class BlochData:
    """Eigenvalues ``etas`` (ascending) and mode integrals ``means`` (n, 2).

    ``means[k]`` is the integral of the k-th L2-normalised eigenfunction over
    the soft region, not its average.
    """

    etas: np.ndarray
    means: np.ndarray
    soft_area: float
    provenance: str = ""
    eigenset: EigenSet | None = field(default=None, repr=False)
    dofmap: DofMap | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return len(self.etas)

    @property
    def clusters(self) -> np.ndarray:
        """Cluster id per mode; neighbours closer than ``CLUSTER_RTOL`` share an id."""
        ids = np.zeros(self.n, dtype=int)
        for k in range(1, self.n):
            gap = (self.etas[k] - self.etas[k - 1]) / max(abs(self.etas[k]), 1e-300)
            ids[k] = ids[k - 1] + (gap > CLUSTER_RTOL)
        return ids

    def mean_floor(self, rel: float = 1e-8) -> float:
        return rel * np.sqrt(self.soft_area)

    def contributing(self, rel: float = 1e-8) -> np.ndarray:
        """Mask of modes whose mean exceeds the noise floor (these are poles of B)."""
        return np.linalg.norm(self.means, axis=1) >= self.mean_floor(rel)

    def truncated(self, n: int) -> "BlochData":
        return BlochData(self.etas[:n], self.means[:n], self.soft_area, self.provenance)

    def cluster_outer_products(self) -> list[np.ndarray]:
        """Sum of ``<phi> (x) <phi>`` over each cluster (basis independent)."""
        ids = self.clusters
        return [np.einsum("ki,kj->ij", self.means[ids == c], self.means[ids == c]) for c in np.unique(ids)]

    @classmethod
    def synthetic(cls, etas, means, soft_area: float = 1.0) -> "BlochData":
        etas = np.asarray(etas, dtype=float)
        means = np.asarray(means, dtype=float).reshape(len(etas), 2)
        order = np.argsort(etas, kind="stable")
        return cls(etas[order], means[order], float(soft_area), "synthetic")

    def write_csv(self, path, header: str = "") -> None:
        with open(path, "w", newline="") as fh:
            if header:
                fh.write(header)
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "eta", "mean_x", "mean_y", "cluster_id"])
            for k, (eta, (mx, my), c) in enumerate(zip(self.etas, self.means, self.clusters), start=1):
                w.writerow([k, f"{eta:.17g}", f"{mx:.17g}", f"{my:.17g}", int(c)])

    @classmethod
    def read_csv(cls, path, soft_area: float) -> "BlochData":
        rows = [r for r in csv.reader(line for line in open(path) if not line.startswith("#"))][1:]
        etas = [float(r[1]) for r in rows]
        means = [[float(r[2]), float(r[3])] for r in rows]
        return cls.synthetic(etas, means, soft_area)


def eigen_means(data: BlochData) -> np.ndarray:
    """Integral of every eigenvector over the soft region, recomputed by quadrature."""
    if data.eigenset is None or data.dofmap is None:
        return data.means.copy()
    L = assemble_load(data.dofmap.mesh, "soft", data.dofmap)
    return (L @ data.eigenset.vectors).T.real


def bloch_eigs(
    mesh: TriMesh,
    A_soft: ElasticTensor,
    n: int = 11,
    order: int = 2,
    rtol: float = 1e-9,
    seed: int = 0,
) -> BlochData:
    """Smallest ``n`` eigenpairs of the soft-inclusion elasticity operator with
    Dirichlet conditions on the interface, at zero quasimomentum."""
    dm = build_dofmap(mesh, "soft", order=order, periodic=False, dirichlet="interface")
    system = assemble_stiffness(mesh, A_soft, (0.0, 0.0), "soft", dm)
    es = smallest_eigenpairs(system.K, system.M, n, rtol=rtol, seed=seed)
    L = assemble_load(mesh, "soft", dm)
    means = (L @ es.vectors).T
    h = hashlib.sha256((mesh.digest() + A_soft.voigt.tobytes().hex() + str(order)).encode()).hexdigest()[:16]
    return BlochData(
        etas=es.values.copy(),
        means=means,
        soft_area=mesh.region_area("soft"),
        provenance=h,
        eigenset=es,
        dofmap=dm,
    )
