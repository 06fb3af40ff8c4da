"""Assembly of quasimomentum-shifted elasticity forms on tagged subdomains.

The stiffness matrix realises

    a_chi(u, v) = int_region A (sym grad + i X_chi) u : conj((sym grad + i X_chi) v)

with ``K[p, q] = a_chi(psi_q, psi_p)`` so that ``a_chi(u, u) = U^H K U``.
Constraints are applied while scattering element matrices: periodic slave
nodes are mapped onto their master, Dirichlet nodes are dropped, and the
mean-zero condition is kept as a separate constraint matrix ``C`` for a
Lagrange-multiplier saddle system.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import kernels
from .errors import AssemblyError
from .mesh import KIND_INTERFACE, TriMesh
from .tensor import ElasticTensor, wrap_quasimomentum

log = logging.getLogger(__name__)


class NodeLayout:
    """Nodes of the P1 or P2 Lagrange space on a mesh."""

    def __init__(self, mesh: TriMesh, order: int = 2):
        if order not in (1, 2):
            raise AssemblyError(f"element order must be 1 or 2, got {order}")
        self.mesh = mesh
        self.order = order
        nv = mesh.n_vertices
        if order == 1:
            self.connectivity = mesh.triangles
            self.coords = mesh.vertices
        else:
            self.connectivity = np.hstack([mesh.triangles, nv + mesh.triangle_edges])
            mids = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
            self.coords = np.vstack([mesh.vertices, mids])
        self.n_nodes = len(self.coords)

    @cached_property
    def periodic_master(self) -> np.ndarray:
        """Canonical representative of each node's periodic class."""
        mesh = self.mesh
        v = mesh.vertices
        master = np.arange(self.n_nodes)
        pairs = mesh.periodic_pairs
        on_right = np.abs(v[:, 0] - 1.0) <= 1e-12
        on_top = np.abs(v[:, 1] - 1.0) <= 1e-12
        vm = np.arange(mesh.n_vertices)
        vm[on_right] = pairs[on_right]
        top_only = on_top & ~on_right
        vm[top_only] = pairs[top_only]
        vm[mesh.corner_class] = mesh.corner_class[0]
        master[: mesh.n_vertices] = vm
        if self.order == 2:
            edges = mesh.edges
            lookup = {tuple(e): i for i, e in enumerate(edges)}
            bnd = np.flatnonzero(pairs >= 0)
            at = {tuple(np.round(v[k], 9)): k for k in bnd}
            nv = mesh.n_vertices
            for i, (p, q) in enumerate(edges):
                if vm[p] == p and vm[q] == q:
                    continue
                ev = v[[p, q]]
                on_r = np.all(np.abs(ev[:, 0] - 1.0) <= 1e-12)
                on_t = np.all(np.abs(ev[:, 1] - 1.0) <= 1e-12)
                if not (on_r or on_t):
                    continue
                shift = np.array([1.0, 0.0]) if on_r else np.array([0.0, 1.0])
                pp = at.get(tuple(np.round(v[p] - shift, 9)))
                qq = at.get(tuple(np.round(v[q] - shift, 9)))
                key = tuple(sorted((pp, qq))) if pp is not None and qq is not None else None
                j = lookup.get(key)
                if j is None:
                    raise AssemblyError(f"boundary edge {(p, q)} has no periodic partner edge")
                master[nv + i] = nv + j
        if np.any(master[master] != master):
            raise AssemblyError("periodic master table contains chains")
        return master

    @cached_property
    def interface_nodes(self) -> np.ndarray:
        mesh = self.mesh
        ids = np.flatnonzero(mesh.vertex_kind == KIND_INTERFACE)
        if self.order == 2:
            ids = np.concatenate([ids, mesh.n_vertices + mesh.interface_edge_ids])
        return np.sort(ids)

    def interface_edge_nodes(self) -> np.ndarray:
        """Per interface edge: (end, end) for P1, (end, end, mid) for P2."""
        ie = self.mesh.interface_edges
        if self.order == 1:
            return ie
        return np.column_stack([ie, self.mesh.n_vertices + self.mesh.interface_edge_ids])


@dataclass(frozen=True, eq=False)
class DofMap:
    """Vector DOFs of one region after constraint elimination.

    ``node_to_free[n]`` is the reduced node index of node ``n`` (``-1`` when
    the node is inactive or Dirichlet-constrained); free DOF ``2 f + c`` is
    component ``c`` of reduced node ``f``.
    """

    layout: NodeLayout
    region: str
    node_to_free: np.ndarray
    free_nodes: np.ndarray
    periodic: bool
    dirichlet_nodes: np.ndarray
    mean_zero: bool

    @property
    def n_free_nodes(self) -> int:
        return len(self.free_nodes)

    @property
    def n_dofs(self) -> int:
        return 2 * len(self.free_nodes)

    @property
    def order(self) -> int:
        return self.layout.order

    @property
    def mesh(self) -> TriMesh:
        return self.layout.mesh

    @property
    def system_size(self) -> int:
        return self.n_dofs + (2 if self.mean_zero else 0)

    def element_dofs(self, elements: np.ndarray) -> np.ndarray:
        nodes = self.node_to_free[self.layout.connectivity[elements]]
        dofs = np.empty((len(elements), 2 * nodes.shape[1]), dtype=np.int64)
        dofs[:, 0::2] = np.where(nodes >= 0, 2 * nodes, -1)
        dofs[:, 1::2] = np.where(nodes >= 0, 2 * nodes + 1, -1)
        return dofs

    def expand(self, x: np.ndarray) -> np.ndarray:
        """Reduced DOF vector(s) -> nodal values (n_nodes, 2, ...), zero where constrained."""
        x = np.asarray(x)
        out = np.zeros((self.layout.n_nodes, 2) + x.shape[1:], dtype=x.dtype)
        active = self.node_to_free >= 0
        f = self.node_to_free[active]
        out[active, 0] = x[2 * f]
        out[active, 1] = x[2 * f + 1]
        return out

    def validate(self) -> None:
        m2f = self.node_to_free
        if self.periodic:
            master = self.layout.periodic_master
            slaves = np.flatnonzero((master != np.arange(len(master))) & (m2f >= 0))
            if np.any(m2f[slaves] != m2f[master[slaves]]):
                raise AssemblyError("slave node does not share its master's DOFs")
        if np.any(m2f[self.dirichlet_nodes] >= 0):
            raise AssemblyError("Dirichlet node left free")
        if len(np.unique(self.free_nodes)) != len(self.free_nodes):
            raise AssemblyError("duplicate free nodes")


def build_dofmap(
    mesh: TriMesh,
    region: str = "all",
    order: int = 2,
    periodic: bool = True,
    dirichlet: str | np.ndarray | None = None,
    mean_zero: bool = False,
    layout: NodeLayout | None = None,
) -> DofMap:
    """DOF map for ``region`` with the requested constraints.

    ``dirichlet`` is ``None``, ``"interface"`` (all nodes on the inclusion
    boundary) or an explicit array of node ids.
    """
    layout = layout if layout is not None and layout.order == order else NodeLayout(mesh, order)
    elements = np.flatnonzero(mesh.region_mask(region))
    if len(elements) == 0:
        raise AssemblyError(f"region {region!r} has no triangles")
    active = np.zeros(layout.n_nodes, dtype=bool)
    active[layout.connectivity[elements].ravel()] = True

    if dirichlet is None:
        dnodes = np.zeros(0, dtype=np.int64)
    elif isinstance(dirichlet, str):
        if dirichlet != "interface":
            raise AssemblyError(f"unknown Dirichlet set {dirichlet!r}")
        dnodes = layout.interface_nodes
    else:
        dnodes = np.asarray(dirichlet, dtype=np.int64)
    dnodes = dnodes[active[dnodes]]

    master = layout.periodic_master if periodic else np.arange(layout.n_nodes)
    is_free_master = active & (master == np.arange(layout.n_nodes))
    is_free_master[dnodes] = False
    free_nodes = np.flatnonzero(is_free_master)
    node_to_free = np.full(layout.n_nodes, -1, dtype=np.int64)
    node_to_free[free_nodes] = np.arange(len(free_nodes))
    slave = active & ~is_free_master
    node_to_free[slave] = node_to_free[master[slave]]
    node_to_free[dnodes] = -1
    if periodic and np.any(active & (node_to_free < 0) & ~np.isin(np.arange(layout.n_nodes), dnodes)):
        raise AssemblyError("periodic master of an active node is not active")

    dm = DofMap(
        layout=layout,
        region=region,
        node_to_free=node_to_free,
        free_nodes=free_nodes,
        periodic=periodic,
        dirichlet_nodes=dnodes,
        mean_zero=mean_zero,
    )
    dm.validate()
    return dm


@dataclass(frozen=True, eq=False)
class HermitianSystem:
    """Stiffness/mass pair over the free DOFs of ``dofmap``.

    ``C`` holds the two mean-zero constraint rows (``C x = int u``) when the
    DOF map asks for them.
    """

    K: sp.csr_matrix
    M: sp.csr_matrix
    dofmap: DofMap
    region: str
    chi: tuple[float, float]
    C: sp.csr_matrix | None = None

    def saddle(self) -> sp.csr_matrix:
        """``[[K, C^T], [C, 0]]``; equals ``K`` when no mean-zero rows exist."""
        if self.C is None:
            return self.K
        return sp.bmat([[self.K, self.C.T], [self.C, None]], format="csc")

    def hermiticity_residual(self) -> float:
        D = self.K - self.K.conj().T
        scale = abs(self.K).max()
        return float(abs(D).max() / scale) if D.nnz else 0.0


def _scatter(dofs: np.ndarray, Ke: np.ndarray, n: int) -> sp.csr_matrix:
    nd = dofs.shape[1]
    rows = np.repeat(dofs, nd, axis=1).ravel()
    cols = np.tile(dofs, (1, nd)).ravel()
    vals = Ke.reshape(len(dofs), -1).ravel()
    keep = (rows >= 0) & (cols >= 0)
    return sp.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n, n)).tocsr()


def _region_elements(dofmap: DofMap, region: str) -> np.ndarray:
    mesh = dofmap.mesh
    if region != dofmap.region and dofmap.region != "all":
        raise AssemblyError(f"DOF map built for {dofmap.region!r} cannot assemble {region!r}")
    return np.flatnonzero(mesh.region_mask(region))


def _element_coords(dofmap: DofMap, elements: np.ndarray) -> np.ndarray:
    mesh = dofmap.mesh
    return mesh.vertices[mesh.triangles[elements]]


def assemble_mass(mesh: TriMesh, region: str, dofmap: DofMap) -> sp.csr_matrix:
    """Vector L2 mass matrix on the free DOFs."""
    if dofmap.mesh is not mesh:
        raise AssemblyError("DOF map belongs to a different mesh")
    elements = _region_elements(dofmap, region)
    Me, _ = kernels.element_mass(_element_coords(dofmap, elements), dofmap.order)
    nn = Me.shape[1]
    Mv = np.zeros((len(elements), 2 * nn, 2 * nn))
    Mv[:, 0::2, 0::2] = Me
    Mv[:, 1::2, 1::2] = Me
    return _scatter(dofmap.element_dofs(elements), Mv, dofmap.n_dofs)


def assemble_load(mesh: TriMesh, region: str, dofmap: DofMap) -> np.ndarray:
    """(2, n_dofs) array: row ``c`` integrates component ``c`` over ``region``."""
    elements = _region_elements(dofmap, region)
    _, Le = kernels.element_mass(_element_coords(dofmap, elements), dofmap.order)
    dofs = dofmap.element_dofs(elements)
    out = np.zeros((2, dofmap.n_dofs))
    for c in range(2):
        d = dofs[:, c::2].ravel()
        keep = d >= 0
        np.add.at(out[c], d[keep], Le.ravel()[keep])
    return out


def assemble_stiffness(
    mesh: TriMesh,
    A: ElasticTensor,
    chi=(0.0, 0.0),
    region: str = "all",
    dofmap: DofMap | None = None,
    with_mass: bool = True,
) -> HermitianSystem:
    """Assemble ``K(chi)`` (and the mass matrix) on ``region``."""
    if dofmap is None:
        dofmap = build_dofmap(mesh, region)
    if dofmap.mesh is not mesh:
        raise AssemblyError("DOF map belongs to a different mesh")
    if not A.is_positive_definite():
        raise AssemblyError("elasticity tensor is not positive definite")
    chi = wrap_quasimomentum(chi)
    elements = _region_elements(dofmap, region)
    coords = _element_coords(dofmap, elements)
    Kr, Ki = kernels.element_stiffness(coords, dofmap.order, A.voigt, chi)
    dofs = dofmap.element_dofs(elements)
    if Ki is None:
        K = _scatter(dofs, Kr, dofmap.n_dofs)
    else:
        K = _scatter(dofs, Kr + 1j * Ki, dofmap.n_dofs)
    M = assemble_mass(mesh, region, dofmap) if with_mass else None
    C = sp.csr_matrix(assemble_load(mesh, region, dofmap)) if dofmap.mean_zero else None
    return HermitianSystem(K=K, M=M, dofmap=dofmap, region=region, chi=(float(chi[0]), float(chi[1])), C=C)


def assemble_boundary_mass(mesh: TriMesh, dofmap: DofMap) -> sp.csr_matrix:
    """Vector L2(Gamma) mass on the DOFs of ``dofmap`` (all nodes must be interface nodes)."""
    if len(mesh.interface_edges) == 0:
        raise AssemblyError("mesh has no interface edges")
    layout = dofmap.layout
    enodes = layout.interface_edge_nodes()
    d = mesh.vertices[mesh.interface_edges[:, 1]] - mesh.vertices[mesh.interface_edges[:, 0]]
    Me = kernels.edge_mass(np.hypot(d[:, 0], d[:, 1]), dofmap.order)
    nn = Me.shape[1]
    fn = dofmap.node_to_free[enodes]
    if np.any(fn < 0):
        raise AssemblyError("interface node missing from the DOF map")
    dofs = np.empty((len(enodes), 2 * nn), dtype=np.int64)
    dofs[:, 0::2] = 2 * fn
    dofs[:, 1::2] = 2 * fn + 1
    Mv = np.zeros((len(enodes), 2 * nn, 2 * nn))
    Mv[:, 0::2, 0::2] = Me
    Mv[:, 1::2, 1::2] = Me
    return _scatter(dofs, Mv, dofmap.n_dofs)


def interface_dofmap(mesh: TriMesh, order: int = 2, layout: NodeLayout | None = None) -> DofMap:
    """DOF map whose free nodes are exactly the interface nodes."""
    layout = layout if layout is not None and layout.order == order else NodeLayout(mesh, order)
    nodes = layout.interface_nodes
    node_to_free = np.full(layout.n_nodes, -1, dtype=np.int64)
    node_to_free[nodes] = np.arange(len(nodes))
    return DofMap(
        layout=layout,
        region="interface",
        node_to_free=node_to_free,
        free_nodes=nodes,
        periodic=False,
        dirichlet_nodes=np.zeros(0, dtype=np.int64),
        mean_zero=False,
    )


def write_coo(matrix, path) -> None:
    """Write a sparse matrix as ``row col re im`` lines (0-based) with a size header."""
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    data = np.asarray(coo.data)[order]
    with Path(path).open("w") as fh:
        fh.write(f"% {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for r, c, v in zip(coo.row[order], coo.col[order], data):
            fh.write(f"{r} {c} {complex(v).real!r} {complex(v).imag!r}\n")


def read_coo(path) -> sp.csr_matrix:
    lines = Path(path).read_text().splitlines()
    nr, nc, _ = (int(t) for t in lines[0].lstrip("%").split())
    rows, cols, vals = [], [], []
    for line in lines[1:]:
        r, c, re, im = line.split()
        rows.append(int(r))
        cols.append(int(c))
        vals.append(complex(float(re), float(im)))
    vals = np.array(vals)
    if not np.any(vals.imag):
        vals = vals.real
    return sp.coo_matrix((vals, (rows, cols)), shape=(nr, nc)).tocsr()
