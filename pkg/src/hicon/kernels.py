"""Element-level kernels for P1/P2 triangles.

Each kernel exists twice: a numba loop over elements and a vectorised numpy
version. :func:`element_stiffness` dispatches on
:data:`hicon._accel.NUMBA_AVAILABLE`; :func:`element_mass` always uses numpy,
which is faster for it. The explicit ``*_numpy`` / ``*_numba`` variants stay
importable for tests and benchmarks.

Local node order for P2 is ``v0, v1, v2, m01, m12, m20``; local vector DOF
``2 * a + c`` is component ``c`` of node ``a``.
"""
from __future__ import annotations

import math

import numpy as np

from . import _accel
from ._accel import njit

SQRT2 = math.sqrt(2.0)


def quadrature(order: int):
    """Points (barycentric xi, eta) and weights on the reference triangle.

    The 3-point rule is exact for degree 2, the 6-point rule for degree 4,
    which covers every product of two P2 shape functions.
    """
    if order == 1:
        pts = np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]])
        w = np.full(3, 1 / 6)
    elif order == 2:
        a, wa = 0.445948490915965, 0.223381589678011
        b, wb = 0.091576213509771, 0.109951743655322
        pts = np.array([[a, a], [1 - 2 * a, a], [a, 1 - 2 * a], [b, b], [1 - 2 * b, b], [b, 1 - 2 * b]])
        w = 0.5 * np.array([wa, wa, wa, wb, wb, wb])
    else:
        raise ValueError(f"unsupported element order {order}")
    return pts, w


def shape_functions(order: int, pts: np.ndarray):
    """Values (nq, nn) and reference gradients (nq, nn, 2) at ``pts``."""
    xi, eta = pts[:, 0], pts[:, 1]
    L = np.stack([1 - xi - eta, xi, eta], axis=1)
    dL = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    nq = len(pts)
    if order == 1:
        return L, np.broadcast_to(dL, (nq, 3, 2)).copy()
    N = np.empty((nq, 6))
    dN = np.empty((nq, 6, 2))
    for i in range(3):
        N[:, i] = L[:, i] * (2 * L[:, i] - 1)
        dN[:, i] = (4 * L[:, i] - 1)[:, None] * dL[i]
    for k, (i, j) in enumerate(((0, 1), (1, 2), (2, 0))):
        N[:, 3 + k] = 4 * L[:, i] * L[:, j]
        dN[:, 3 + k] = 4 * (L[:, i][:, None] * dL[j] + L[:, j][:, None] * dL[i])
    return N, dN


def reference_data(order: int):
    pts, w = quadrature(order)
    N, dN = shape_functions(order, pts)
    return N, dN, w


# --------------------------------------------------------------------------
# numpy kernels


def _jacobians(coords):
    """Return ``|det J|`` (orientation-free quadrature weight) and ``J^{-1}``."""
    x0 = coords[:, 0]
    J = np.stack([coords[:, 1] - x0, coords[:, 2] - x0], axis=2)  # J[e, i, m] = dx_i/dxi_m
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    inv = np.empty_like(J)
    inv[:, 0, 0] = J[:, 1, 1] / det
    inv[:, 1, 1] = J[:, 0, 0] / det
    inv[:, 0, 1] = -J[:, 0, 1] / det
    inv[:, 1, 0] = -J[:, 1, 0] / det
    return np.abs(det), inv


def _b_matrices(dNx, N, chi):
    """Gradient part (ne, nq, 3, nd) and quasimomentum part (nq, 3, nd)."""
    ne, nq, nn, _ = dNx.shape
    Bg = np.zeros((ne, nq, 3, 2 * nn))
    Bg[..., 0, 0::2] = dNx[..., 0]
    Bg[..., 1, 1::2] = dNx[..., 1]
    Bg[..., 2, 0::2] = dNx[..., 1] / SQRT2
    Bg[..., 2, 1::2] = dNx[..., 0] / SQRT2
    c1, c2 = chi
    Bc = np.zeros((nq, 3, 2 * nn))
    Bc[:, 0, 0::2] = c1 * N
    Bc[:, 1, 1::2] = c2 * N
    Bc[:, 2, 0::2] = c2 * N / SQRT2
    Bc[:, 2, 1::2] = c1 * N / SQRT2
    return Bg, Bc


def element_stiffness_numpy(coords, order, voigt, chi):
    N, dN, w = reference_data(order)
    det, inv = _jacobians(np.asarray(coords, dtype=float))
    dNx = np.einsum("qam,emk->eqak", dN, inv)
    Bg, Bc = _b_matrices(dNx, N, np.asarray(chi, dtype=float))
    wd = det[:, None] * w[None, :]
    DBg = np.einsum("ij,eqjp->eqip", voigt, Bg)
    Kr = np.einsum("eq,eqip,eqir->epr", wd, Bg, DBg)
    if not np.any(chi):
        return Kr, None
    DBc = np.einsum("ij,qjp->qip", voigt, Bc)
    Kr += np.einsum("eq,qip,qir->epr", wd, Bc, DBc)
    cross = np.einsum("eq,eqip,qir->epr", wd, Bg, DBc)
    Ki = cross - cross.transpose(0, 2, 1)
    return Kr, Ki


def element_mass_numpy(coords, order):
    N, _, w = reference_data(order)
    det, _ = _jacobians(np.asarray(coords, dtype=float))
    ref = np.einsum("q,qa,qb->ab", w, N, N)
    load = np.einsum("q,qa->a", w, N)
    return det[:, None, None] * ref, det[:, None] * load


# --------------------------------------------------------------------------
# numba kernels


@njit(cache=True)
def _stiffness_loop(coords, N, dN, w, voigt, chi, with_imag):
    ne = coords.shape[0]
    nq, nn = N.shape
    nd = 2 * nn
    Kr = np.zeros((ne, nd, nd))
    Ki = np.zeros((ne, nd, nd)) if with_imag else np.zeros((0, nd, nd))
    Bg = np.zeros((3, nd))
    Bc = np.zeros((3, nd))
    DBg = np.zeros((3, nd))
    DBc = np.zeros((3, nd))
    inv = np.zeros((2, 2))
    s = 1.0 / np.sqrt(2.0)
    c1 = chi[0]
    c2 = chi[1]
    for e in range(ne):
        j00 = coords[e, 1, 0] - coords[e, 0, 0]
        j01 = coords[e, 2, 0] - coords[e, 0, 0]
        j10 = coords[e, 1, 1] - coords[e, 0, 1]
        j11 = coords[e, 2, 1] - coords[e, 0, 1]
        det = j00 * j11 - j01 * j10
        inv[0, 0] = j11 / det
        inv[0, 1] = -j01 / det
        inv[1, 0] = -j10 / det
        inv[1, 1] = j00 / det
        for q in range(nq):
            wd = w[q] * abs(det)
            for a in range(nn):
                gx = dN[q, a, 0] * inv[0, 0] + dN[q, a, 1] * inv[1, 0]
                gy = dN[q, a, 0] * inv[0, 1] + dN[q, a, 1] * inv[1, 1]
                Bg[0, 2 * a] = gx
                Bg[1, 2 * a] = 0.0
                Bg[2, 2 * a] = gy * s
                Bg[0, 2 * a + 1] = 0.0
                Bg[1, 2 * a + 1] = gy
                Bg[2, 2 * a + 1] = gx * s
                n = N[q, a]
                Bc[0, 2 * a] = c1 * n
                Bc[1, 2 * a] = 0.0
                Bc[2, 2 * a] = c2 * n * s
                Bc[0, 2 * a + 1] = 0.0
                Bc[1, 2 * a + 1] = c2 * n
                Bc[2, 2 * a + 1] = c1 * n * s
            for i in range(3):
                for p in range(nd):
                    tg = 0.0
                    tc = 0.0
                    for j in range(3):
                        tg += voigt[i, j] * Bg[j, p]
                        tc += voigt[i, j] * Bc[j, p]
                    DBg[i, p] = tg
                    DBc[i, p] = tc
            for p in range(nd):
                for r in range(nd):
                    re = 0.0
                    im = 0.0
                    for i in range(3):
                        re += Bg[i, p] * DBg[i, r] + Bc[i, p] * DBc[i, r]
                        im += Bg[i, p] * DBc[i, r] - Bc[i, p] * DBg[i, r]
                    Kr[e, p, r] += wd * re
                    if with_imag:
                        Ki[e, p, r] += wd * im
    return Kr, Ki


@njit(cache=True)
def _mass_loop(coords, N, w):
    ne = coords.shape[0]
    nq, nn = N.shape
    Me = np.zeros((ne, nn, nn))
    Le = np.zeros((ne, nn))
    for e in range(ne):
        det = (coords[e, 1, 0] - coords[e, 0, 0]) * (coords[e, 2, 1] - coords[e, 0, 1]) - (
            coords[e, 2, 0] - coords[e, 0, 0]
        ) * (coords[e, 1, 1] - coords[e, 0, 1])
        for q in range(nq):
            wd = w[q] * abs(det)
            for a in range(nn):
                Le[e, a] += wd * N[q, a]
                for b in range(nn):
                    Me[e, a, b] += wd * N[q, a] * N[q, b]
    return Me, Le


def element_stiffness_numba(coords, order, voigt, chi):
    N, dN, w = reference_data(order)
    chi = np.asarray(chi, dtype=float)
    with_imag = bool(np.any(chi))
    Kr, Ki = _stiffness_loop(
        np.ascontiguousarray(coords, dtype=float), N, np.ascontiguousarray(dN), w, np.ascontiguousarray(voigt), chi, with_imag
    )
    return Kr, (Ki if with_imag else None)


def element_mass_numba(coords, order):
    N, _, w = reference_data(order)
    return _mass_loop(np.ascontiguousarray(coords, dtype=float), N, w)


# --------------------------------------------------------------------------
# dispatch


def element_stiffness(coords, order, voigt, chi=(0.0, 0.0)):
    """Element matrices ``int (B^H A B)`` split into real and imaginary parts.

    Returns ``(Kr, Ki)`` with shape (ne, nd, nd); ``Ki`` is ``None`` when
    ``chi`` is zero.
    """
    if _accel.NUMBA_AVAILABLE:
        return element_stiffness_numba(coords, order, voigt, chi)
    return element_stiffness_numpy(coords, order, voigt, chi)


def element_mass(coords, order):
    """Scalar element mass matrices (ne, nn, nn) and load vectors (ne, nn).

    Always the numpy version: each matrix is the reference matrix times
    ``|det J|``, which broadcasting does faster than the element loop
    (see ``benchmarks/bench_kernels.py``).
    """
    return element_mass_numpy(coords, order)


def edge_mass(lengths, order):
    """1D boundary mass on straight edges; P2 node order is (end, end, mid)."""
    lengths = np.asarray(lengths, dtype=float)
    if order == 1:
        ref = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    else:
        ref = np.array([[4.0, -1.0, 2.0], [-1.0, 4.0, 2.0], [2.0, 2.0, 16.0]]) / 30.0
    return lengths[:, None, None] * ref


def element_strain_load(coords, order, stress_voigt):
    """``int B_grad^T sigma`` per element for a constant Voigt stress: (ne, nd)."""
    N, dN, w = reference_data(order)
    det, inv = _jacobians(np.asarray(coords, dtype=float))
    dNx = np.einsum("qam,emk->eqak", dN, inv)
    Bg, _ = _b_matrices(dNx, N, np.zeros(2))
    return np.einsum("e,q,eqip,i->ep", det, w, Bg, np.asarray(stress_voigt, dtype=float))


def element_strain_integrals(coords, order):
    """``int B_grad^T`` per element: (ne, nd, 3), so a constant stress gives ``G @ sigma``."""
    N, dN, w = reference_data(order)
    det, inv = _jacobians(np.asarray(coords, dtype=float))
    dNx = np.einsum("qam,emk->eqak", dN, inv)
    Bg, _ = _b_matrices(dNx, N, np.zeros(2))
    return np.einsum("e,q,eqip->epi", det, w, Bg)
