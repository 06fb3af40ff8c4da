"""Unit-cell triangulation with an embedded elliptical soft inclusion.

The cell ``[0, 1]^2`` is split into four rectangles meeting at the ellipse
centre. One reference rectangle is triangulated (graded rings around the
quarter ellipse, a uniform background grid further out) and reflected into
the other three, so that

* the mesh is conforming across the two mirror lines,
* vertices on opposite sides of the cell coincide up to a unit translation,
* a centred inclusion yields a mesh with the reflection symmetries of the
  ellipse.

Everything is deterministic: the same :class:`Geometry` always produces the
same vertex and triangle arrays.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .errors import GeometryError, MeshError

SOFT = 1
STIFF = 0

# vertex kinds
KIND_SOFT = 0
KIND_INTERFACE = 1
KIND_STIFF = 2

_RING_GROWTH = 1.3
_ROW_HEIGHT = math.sqrt(3.0) / 2.0


@dataclass(frozen=True)
class Geometry:
    """Elliptical inclusion inside the unit cell.

    ``a`` and ``b`` are the semi-axes along x and y. ``boundary_segments`` is
    a lower bound on the number of polygon edges approximating the ellipse;
    the edge length never exceeds ``target_h / 2``. The count is always rounded up to a multiple of
    four so the quarter-cell construction applies.
    """

    center: tuple[float, float] = (0.5, 0.5)
    a: float = 0.04
    b: float = 0.045
    target_h: float = 0.02
    boundary_segments: int | None = None

    def __post_init__(self):
        cx, cy = (float(c) for c in self.center)
        object.__setattr__(self, "center", (cx, cy))
        if not (self.a > 0 and self.b > 0):
            raise GeometryError(f"ellipse semi-axes must be positive, got a={self.a}, b={self.b}")
        if not self.target_h > 0:
            raise GeometryError(f"target_h must be positive, got {self.target_h}")
        if not (0.0 < cx - self.a and cx + self.a < 1.0 and 0.0 < cy - self.b and cy + self.b < 1.0):
            raise GeometryError(
                f"ellipse centred at ({cx}, {cy}) with semi-axes ({self.a}, {self.b}) "
                "touches or crosses the cell boundary"
            )
        if self.boundary_segments is not None and self.boundary_segments < 16:
            raise GeometryError(f"boundary_segments must be >= 16, got {self.boundary_segments}")

    @property
    def area(self) -> float:
        return math.pi * self.a * self.b

    @property
    def perimeter(self) -> float:
        """Ramanujan's second approximation of the ellipse perimeter."""
        a, b = self.a, self.b
        h = ((a - b) / (a + b)) ** 2
        return math.pi * (a + b) * (1.0 + 3.0 * h / (10.0 + math.sqrt(4.0 - 3.0 * h)))

    def interface_segments(self) -> int:
        """Polygon edge count: the inclusion is resolved at ``target_h / 2``."""
        derived = math.ceil(2.0 * self.perimeter / self.target_h - 1e-9)
        if derived < 8 and self.boundary_segments is None:
            raise MeshError(
                f"target_h={self.target_h} resolves the ellipse with only {derived} "
                "interface edges (need at least 8)"
            )
        n = derived if self.boundary_segments is None else max(self.boundary_segments, derived)
        return 4 * math.ceil(n / 4)

    def level(self, xy: np.ndarray) -> np.ndarray:
        """Normalised radius ``sqrt(((x-cx)/a)^2 + ((y-cy)/b)^2)``."""
        xy = np.asarray(xy, dtype=float)
        cx, cy = self.center
        return np.hypot((xy[..., 0] - cx) / self.a, (xy[..., 1] - cy) / self.b)

    def project(self, xy: np.ndarray) -> np.ndarray:
        """Radially project points onto the ellipse."""
        xy = np.asarray(xy, dtype=float)
        c = np.asarray(self.center)
        rho = self.level(xy)
        return c + (xy - c) / rho[..., None]

    def to_dict(self) -> dict:
        return {
            "center": list(self.center),
            "a": self.a,
            "b": self.b,
            "target_h": self.target_h,
            "boundary_segments": self.boundary_segments,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Geometry":
        return cls(
            center=tuple(d.get("center", (0.5, 0.5))),
            a=d["a"],
            b=d["b"],
            target_h=d["target_h"],
            boundary_segments=d.get("boundary_segments"),
        )


def _frozen(arr, dtype):
    out = np.ascontiguousarray(arr, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Conforming triangulation of the unit cell.

    Attributes
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counter-clockwise
    tags : (nt,) int array, ``SOFT`` or ``STIFF``
    vertex_kind : (nv,) int array, ``KIND_SOFT``, ``KIND_INTERFACE`` or ``KIND_STIFF``
    interface_edges : (ne, 2) int array, ordered counter-clockwise around the
        inclusion so the soft region lies to the left of every edge
    periodic_pairs : (nv,) int array, partner of each outer-boundary vertex
        under a unit translation, ``-1`` for all other vertices
    corner_class : (4,) int array, the corners (0,0), (1,0), (0,1), (1,1)
    """

    vertices: np.ndarray
    triangles: np.ndarray
    tags: np.ndarray
    vertex_kind: np.ndarray
    interface_edges: np.ndarray
    periodic_pairs: np.ndarray
    corner_class: np.ndarray
    geometry: Geometry | None = None
    level: int = 0

    def __post_init__(self):
        object.__setattr__(self, "vertices", _frozen(self.vertices, float).reshape(-1, 2))
        object.__setattr__(self, "triangles", _frozen(self.triangles, np.int64).reshape(-1, 3))
        object.__setattr__(self, "tags", _frozen(self.tags, np.int8))
        object.__setattr__(self, "vertex_kind", _frozen(self.vertex_kind, np.int8))
        object.__setattr__(self, "interface_edges", _frozen(self.interface_edges, np.int64).reshape(-1, 2))
        object.__setattr__(self, "periodic_pairs", _frozen(self.periodic_pairs, np.int64))
        object.__setattr__(self, "corner_class", _frozen(self.corner_class, np.int64))

    def __repr__(self):
        return (
            f"TriMesh(nv={self.n_vertices}, nt={self.n_triangles}, "
            f"soft={int(self.tags.sum())}, interface={len(self.interface_edges)}, level={self.level})"
        )

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def region_mask(self, region: str) -> np.ndarray:
        if region == "all":
            return np.ones(self.n_triangles, dtype=bool)
        if region == "soft":
            return self.tags == SOFT
        if region == "stiff":
            return self.tags == STIFF
        raise ValueError(f"unknown region {region!r}")

    def region_area(self, region: str = "all") -> float:
        return float(np.sum(self.signed_areas[self.region_mask(region)]))

    @cached_property
    def _edge_table(self):
        local = np.array([[0, 1], [1, 2], [2, 0]])
        all_edges = self.triangles[:, local].reshape(-1, 2)
        keyed = np.sort(all_edges, axis=1)
        edges, inverse = np.unique(keyed, axis=0, return_inverse=True)
        return edges, inverse.reshape(-1, 3)

    @property
    def edges(self) -> np.ndarray:
        """Unique edges as sorted vertex pairs."""
        return self._edge_table[0]

    @property
    def triangle_edges(self) -> np.ndarray:
        """(nt, 3) edge ids; local edge k joins local vertices k and (k+1) % 3."""
        return self._edge_table[1]

    @cached_property
    def interface_edge_ids(self) -> np.ndarray:
        edges = self.edges
        if len(self.interface_edges) == 0:
            return np.zeros(0, dtype=np.int64)
        keys = np.sort(self.interface_edges, axis=1)
        lookup = {tuple(e): i for i, e in enumerate(edges)}
        try:
            return np.array([lookup[tuple(k)] for k in keys], dtype=np.int64)
        except KeyError as exc:
            raise MeshError(f"interface edge {exc.args[0]} is not a mesh edge") from None

    @property
    def interface_length(self) -> float:
        if len(self.interface_edges) == 0:
            return 0.0
        d = self.vertices[self.interface_edges[:, 1]] - self.vertices[self.interface_edges[:, 0]]
        return float(np.hypot(d[:, 0], d[:, 1]).sum())

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.vertices, self.triangles, self.tags, self.interface_edges):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()[:16]


# --------------------------------------------------------------------------
# construction


def _quarter_arc(sa: float, sb: float, n: int) -> np.ndarray:
    t = np.linspace(0.0, 0.5 * math.pi, n + 1)
    pts = np.column_stack([sa * np.cos(t), sb * np.sin(t)])
    pts[0, 1] = 0.0
    pts[-1, 0] = 0.0
    return pts


def _quarter_perimeter(sa: float, sb: float) -> float:
    h = ((sa - sb) / (sa + sb)) ** 2
    return 0.25 * math.pi * (sa + sb) * (1.0 + 3.0 * h / (10.0 + math.sqrt(4.0 - 3.0 * h)))


def _reference_quadrant(W: float, H: float, a: float, b: float, nq: int, target_h: float):
    """Triangulate ``[0, W] x [0, H]`` around a quarter ellipse at the origin."""
    h_if = _quarter_perimeter(a, b) / nq
    pts = [np.zeros((1, 2))]
    kinds = [np.array([KIND_SOFT])]

    # soft interior: scaled copies of the ellipse
    m = max(1, round(min(a, b) / (_ROW_HEIGHT * h_if)))
    for i in range(1, m):
        s = i / m
        ni = max(1, round(nq * s))
        ring = _quarter_arc(s * a, s * b, ni)
        pts.append(ring)
        kinds.append(np.full(len(ring), KIND_SOFT))

    arc = _quarter_arc(a, b, nq)
    pts.append(arc)
    kinds.append(np.full(len(arc), KIND_INTERFACE))

    # graded rings outside the inclusion
    d = 0.0
    h = h_if
    last_offset, last_h = 0.0, h_if
    while h < target_h:
        d += _ROW_HEIGHT * h
        sa, sb = a + d, b + d
        if sa > W - 0.5 * h and sb > H - 0.5 * h:
            break
        nr = max(1, round(_quarter_perimeter(sa, sb) / h))
        ring = _quarter_arc(sa, sb, nr)
        keep = (ring[:, 0] <= W - 0.5 * h) & (ring[:, 1] <= H - 0.5 * h)
        ring = ring[keep]
        pts.append(ring)
        kinds.append(np.full(len(ring), KIND_STIFF))
        last_offset, last_h = d, h
        h *= _RING_GROWTH

    inner = np.concatenate(pts)
    tree = cKDTree(inner)

    nx = max(1, math.ceil(W / target_h - 1e-9))
    ny = max(1, math.ceil(H / target_h - 1e-9))
    gx = np.linspace(0.0, W, nx + 1)
    gy = np.linspace(0.0, H, ny + 1)
    gx[-1], gy[-1] = W, H
    X, Y = np.meshgrid(gx, gy, indexing="ij")
    grid = np.column_stack([X.ravel(), Y.ravel()])
    on_outer = (grid[:, 0] == W) | (grid[:, 1] == H)
    sa, sb = a + last_offset, b + last_offset
    inside = np.hypot(grid[:, 0] / sa, grid[:, 1] / sb) < 1.0
    dist, _ = tree.query(grid)
    clearance = _ROW_HEIGHT * max(last_h * _RING_GROWTH, 0.5 * target_h)
    keep = on_outer | (~inside & (dist >= clearance))
    if np.any(on_outer & (inside | (dist < 0.25 * last_h))):
        raise MeshError("inclusion rings reach the cell boundary; reduce target_h or the ellipse size")
    grid = grid[keep]

    allpts = np.concatenate([inner, grid])
    allkind = np.concatenate(kinds + [np.full(len(grid), KIND_STIFF)])
    tri = Delaunay(allpts).simplices.astype(np.int64)

    # every polygon edge of the quarter ellipse must be present
    arc_ids = np.flatnonzero(allkind == KIND_INTERFACE)
    tri_edges = {tuple(sorted(e)) for t in tri for e in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0]))}
    for i in range(len(arc_ids) - 1):
        if (arc_ids[i], arc_ids[i + 1]) not in tri_edges:
            raise MeshError("ellipse polygon edge not recovered by the triangulation; refine target_h")
    return allpts, allkind, tri


def build_unit_cell_mesh(geom: Geometry) -> TriMesh:
    """Build the level-0 unit-cell mesh for ``geom``."""
    n_if = geom.interface_segments()
    nq = n_if // 4
    cx, cy = geom.center
    cache = {}
    all_pts, all_kind, all_tri = [], [], []
    offset = 0
    for sx, sy in ((1, 1), (-1, 1), (-1, -1), (1, -1)):
        W = 1.0 - cx if sx > 0 else cx
        H = 1.0 - cy if sy > 0 else cy
        key = (W, H)
        if key not in cache:
            cache[key] = _reference_quadrant(W, H, geom.a, geom.b, nq, geom.target_h)
        ref, kind, tri = cache[key]
        x = cx + sx * ref[:, 0]
        y = cy + sy * ref[:, 1]
        x[ref[:, 0] == 0.0] = cx
        y[ref[:, 1] == 0.0] = cy
        x[ref[:, 0] == W] = 1.0 if sx > 0 else 0.0
        y[ref[:, 1] == H] = 1.0 if sy > 0 else 0.0
        all_pts.append(np.column_stack([x, y]))
        all_kind.append(kind)
        all_tri.append(tri + offset)
        offset += len(ref)
    pts = np.concatenate(all_pts)
    kind = np.concatenate(all_kind)
    tri = np.concatenate(all_tri)

    vertices, first, inverse = np.unique(pts, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.ravel()
    vkind = kind[first]
    tri = inverse[tri]

    mesh = _finish(vertices, tri, vkind, geom, level=0)
    validate_mesh(mesh)
    return mesh


def _orient(vertices, tri):
    p = vertices[tri]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    area = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    tri = tri.copy()
    neg = area < 0
    tri[neg] = tri[neg][:, [0, 2, 1]]
    return tri


def _ordered_interface(vertices, vkind, geom):
    ids = np.flatnonzero(vkind == KIND_INTERFACE)
    if len(ids) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    cx, cy = geom.center
    ang = np.arctan2((vertices[ids, 1] - cy) / geom.b, (vertices[ids, 0] - cx) / geom.a)
    ang = np.mod(ang, 2.0 * math.pi)
    ids = ids[np.argsort(ang, kind="stable")]
    return np.column_stack([ids, np.roll(ids, -1)])


def _finish(vertices, tri, vkind, geom, level, interface_edges=None):
    tri = _orient(vertices, tri)
    soft = np.all(vkind[tri] != KIND_STIFF, axis=1)
    tags = np.where(soft, SOFT, STIFF)
    if interface_edges is None:
        interface_edges = _ordered_interface(vertices, vkind, geom) if geom is not None else np.zeros((0, 2))
    pairs, corners = periodic_pairing(vertices)
    return TriMesh(
        vertices=vertices,
        triangles=tri,
        tags=tags,
        vertex_kind=vkind,
        interface_edges=interface_edges,
        periodic_pairs=pairs,
        corner_class=corners,
        geometry=geom,
        level=level,
    )


def periodic_pairing(vertices: np.ndarray, tol: float = 1e-12):
    """Partner of every outer-boundary vertex under translation by (1,0) or (0,1).

    Left/right and bottom/top vertices are paired; the corners are paired
    horizontally. Returns ``(pairs, corner_class)``.
    """
    v = np.asarray(vertices)
    nv = len(v)
    pairs = np.full(nv, -1, dtype=np.int64)
    left = np.abs(v[:, 0]) <= tol
    right = np.abs(v[:, 0] - 1.0) <= tol
    bottom = np.abs(v[:, 1]) <= tol
    top = np.abs(v[:, 1] - 1.0) <= tol

    def key(t):
        return int(round(t / tol))

    def match(src, dst, coord):
        table = {key(v[i, coord]): i for i in np.flatnonzero(dst)}
        for i in np.flatnonzero(src):
            j = table.get(key(v[i, coord]))
            if j is None:
                raise MeshError(f"boundary vertex {i} at {tuple(v[i])} has no periodic partner")
            pairs[i] = j
            pairs[j] = i

    match(left, right, 1)
    match(bottom & ~left & ~right, top & ~left & ~right, 0)

    corners = []
    for cx, cy in ((0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)):
        hit = np.flatnonzero((np.abs(v[:, 0] - cx) <= tol) & (np.abs(v[:, 1] - cy) <= tol))
        if len(hit) != 1:
            raise MeshError(f"corner ({cx}, {cy}) missing from the mesh")
        corners.append(hit[0])
    return pairs, np.array(corners, dtype=np.int64)


def refine(mesh: TriMesh) -> TriMesh:
    """Uniform midpoint refinement; interface midpoints are projected onto the ellipse."""
    edges = mesh.edges
    te = mesh.triangle_edges
    nv = mesh.n_vertices
    mids = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    is_if = np.zeros(len(edges), dtype=bool)
    is_if[mesh.interface_edge_ids] = True
    if mesh.geometry is not None and is_if.any():
        mids[is_if] = mesh.geometry.project(mids[is_if])
    k = mesh.vertex_kind
    ek = np.where(np.maximum(k[edges[:, 0]], k[edges[:, 1]]) == KIND_STIFF, KIND_STIFF, KIND_SOFT)
    ek[is_if] = KIND_INTERFACE

    vertices = np.concatenate([mesh.vertices, mids])
    vkind = np.concatenate([mesh.vertex_kind, ek])
    t = mesh.triangles
    m01, m12, m20 = (te[:, 0] + nv, te[:, 1] + nv, te[:, 2] + nv)
    tri = np.stack(
        [
            np.column_stack([t[:, 0], m01, m20]),
            np.column_stack([m01, t[:, 1], m12]),
            np.column_stack([m20, m12, t[:, 2]]),
            np.column_stack([m01, m12, m20]),
        ],
        axis=1,
    ).reshape(-1, 3)
    tags = np.repeat(mesh.tags, 4)

    ie = mesh.interface_edges
    if len(ie):
        mid_ids = mesh.interface_edge_ids + nv
        interface = np.stack([np.column_stack([ie[:, 0], mid_ids]), np.column_stack([mid_ids, ie[:, 1]])], axis=1)
        interface = interface.reshape(-1, 2)
    else:
        interface = np.zeros((0, 2), dtype=np.int64)

    pairs, corners = periodic_pairing(vertices)
    out = TriMesh(
        vertices=vertices,
        triangles=tri,
        tags=tags,
        vertex_kind=vkind,
        interface_edges=interface,
        periodic_pairs=pairs,
        corner_class=corners,
        geometry=mesh.geometry,
        level=mesh.level + 1,
    )
    validate_mesh(out)
    return out


def refine_times(mesh: TriMesh, times: int) -> TriMesh:
    for _ in range(times):
        mesh = refine(mesh)
    return mesh


def uniform_mesh(n: int) -> TriMesh:
    """Structured ``n x n`` periodic mesh with no inclusion (all stiff)."""
    g = np.linspace(0.0, 1.0, n + 1)
    g[-1] = 1.0
    X, Y = np.meshgrid(g, g, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    v00, v10 = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel()
    v01, v11 = idx[:-1, 1:].ravel(), idx[1:, 1:].ravel()
    tri = np.concatenate([np.column_stack([v00, v10, v11]), np.column_stack([v00, v11, v01])])
    vkind = np.full(len(vertices), KIND_STIFF)
    mesh = _finish(vertices, tri, vkind, None, level=0, interface_edges=np.zeros((0, 2), dtype=np.int64))
    validate_mesh(mesh)
    return mesh


# --------------------------------------------------------------------------
# validation


def validate_mesh(mesh: TriMesh, tol: float = 1e-12) -> None:
    """Raise :class:`MeshError` unless every structural invariant holds."""
    areas = mesh.signed_areas
    if np.any(areas <= 0):
        raise MeshError(f"{int(np.sum(areas <= 0))} triangles with non-positive area")
    if abs(areas.sum() - 1.0) > tol:
        raise MeshError(f"triangle areas sum to {areas.sum()!r}, expected 1")

    edges, te = mesh.edges, mesh.triangle_edges
    count = np.bincount(te.ravel(), minlength=len(edges))
    if np.any(count > 2):
        raise MeshError("non-manifold edge shared by more than two triangles")
    boundary = edges[count == 1]
    bv = mesh.vertices[boundary]
    on_side = (
        (np.abs(bv[:, :, 0]) <= tol).all(1)
        | (np.abs(bv[:, :, 0] - 1) <= tol).all(1)
        | (np.abs(bv[:, :, 1]) <= tol).all(1)
        | (np.abs(bv[:, :, 1] - 1) <= tol).all(1)
    )
    if not on_side.all():
        raise MeshError("mesh is not conforming: hanging edge inside the cell")

    pairs = mesh.periodic_pairs
    bidx = np.flatnonzero(pairs >= 0)
    if np.any(pairs[pairs[bidx]] != bidx):
        raise MeshError("periodic pairing is not an involution")
    shift = mesh.vertices[pairs[bidx]] - mesh.vertices[bidx]
    ok = (np.abs(np.abs(shift) - np.array([1.0, 0.0])) <= tol).all(1) | (
        np.abs(np.abs(shift) - np.array([0.0, 1.0])) <= tol
    ).all(1)
    if not ok.all():
        raise MeshError("periodic partners are not related by a unit translation")

    if len(mesh.interface_edges):
        tri_of_edge = [[] for _ in range(len(edges))]
        for t, row in enumerate(te):
            for e in row:
                tri_of_edge[e].append(t)
        for e in mesh.interface_edge_ids:
            tags = sorted(mesh.tags[tri_of_edge[e]])
            if tags != [STIFF, SOFT]:
                raise MeshError(f"interface edge {edges[e]} does not separate soft and stiff triangles")
        # soft region to the left of each directed interface edge
        p, q = mesh.vertices[mesh.interface_edges[:, 0]], mesh.vertices[mesh.interface_edges[:, 1]]
        c = np.asarray(mesh.geometry.center) if mesh.geometry is not None else p.mean(0)
        cross = (q[:, 0] - p[:, 0]) * (c[1] - p[:, 1]) - (q[:, 1] - p[:, 1]) * (c[0] - p[:, 0])
        if np.any(cross <= 0):
            raise MeshError("interface edges are not consistently oriented")


# --------------------------------------------------------------------------
# JSON layout

MESH_FORMAT = "hicon-trimesh"


def mesh_to_dict(mesh: TriMesh) -> dict:
    bidx = np.flatnonzero(mesh.periodic_pairs >= 0)
    return {
        "format": MESH_FORMAT,
        "version": 1,
        "level": mesh.level,
        "geometry": mesh.geometry.to_dict() if mesh.geometry is not None else None,
        "vertices": mesh.vertices.tolist(),
        "vertex_kind": mesh.vertex_kind.tolist(),
        "triangles": mesh.triangles.tolist(),
        "tags": ["soft" if t == SOFT else "stiff" for t in mesh.tags],
        "interface_edges": mesh.interface_edges.tolist(),
        "periodic_pairs": [[int(i), int(mesh.periodic_pairs[i])] for i in bidx],
        "corner_class": mesh.corner_class.tolist(),
    }


def mesh_from_dict(d: dict) -> TriMesh:
    if d.get("format") != MESH_FORMAT:
        raise MeshError(f"not a {MESH_FORMAT} document")
    vertices = np.array(d["vertices"], dtype=float).reshape(-1, 2)
    pairs = np.full(len(vertices), -1, dtype=np.int64)
    for i, j in d["periodic_pairs"]:
        pairs[i] = j
    mesh = TriMesh(
        vertices=vertices,
        triangles=np.array(d["triangles"], dtype=np.int64),
        tags=np.array([SOFT if t == "soft" else STIFF for t in d["tags"]]),
        vertex_kind=np.array(d["vertex_kind"]),
        interface_edges=np.array(d["interface_edges"], dtype=np.int64).reshape(-1, 2),
        periodic_pairs=pairs,
        corner_class=np.array(d["corner_class"]),
        geometry=Geometry.from_dict(d["geometry"]) if d.get("geometry") else None,
        level=int(d.get("level", 0)),
    )
    validate_mesh(mesh)
    return mesh


def save_mesh(mesh: TriMesh, path) -> None:
    Path(path).write_text(json.dumps(mesh_to_dict(mesh)))


def load_mesh(path) -> TriMesh:
    return mesh_from_dict(json.loads(Path(path).read_text()))
