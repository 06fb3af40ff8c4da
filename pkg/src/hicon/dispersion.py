"""Effective dispersion relation ``det(eps^-2 |chi|^2 A_theta - B(z)) = 0``.

For a unit direction ``theta`` the relation is solved through the
eigenvalues ``mu_j(z)`` of ``A_theta^{-1/2} B(z) A_theta^{-1/2}``: every
non-negative ``mu_j`` gives one solution ``|chi| = eps sqrt(mu_j)``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateError, GridError
from .tensor import x_chi_matrix
from .zhikov import TOL_GAP, ZhikovFunction, sym2_eigvalsh


def _voigt_of(A) -> np.ndarray:
    v = getattr(A, "voigt", A)
    return np.asarray(v, dtype=float)


def unit_direction(theta) -> np.ndarray:
    t = np.asarray(theta, dtype=float).reshape(2)
    n = np.hypot(t[0], t[1])
    if n == 0.0:
        raise ValueError("direction must be nonzero")
    return t / n


@dataclass(frozen=True, eq=False)
class DirectionStiffness:
    """``A_theta = X_theta^T A_macro X_theta`` with its symmetric roots."""

    theta: np.ndarray
    A: np.ndarray
    sqrt: np.ndarray
    inv_sqrt: np.ndarray
    inv: np.ndarray


def direction_stiffness(A_macro, theta) -> DirectionStiffness:
    """Directional stiffness for ``theta`` (normalised before use)."""
    t = unit_direction(theta)
    X = x_chi_matrix(t)
    At = X.T @ _voigt_of(A_macro) @ X
    At = 0.5 * (At + At.T)
    w, V = np.linalg.eigh(At)
    if not np.all(np.isfinite(w)) or w[0] <= 0.0:
        raise DegenerateError(f"A_theta is not positive definite for theta={t.tolist()} (eigenvalues {w.tolist()})")
    sq = (V * np.sqrt(w)) @ V.T
    isq = (V / np.sqrt(w)) @ V.T
    inv = (V / w) @ V.T
    return DirectionStiffness(t, At, sq, isq, inv)


@dataclass(frozen=True, eq=False)
class DispersionBranch:
    """Samples ``(z, |chi|)`` of one branch on one analyticity interval."""

    theta: np.ndarray
    j: int
    interval: int
    z: np.ndarray
    chi_norm: np.ndarray
    mu: np.ndarray = field(repr=False)

    @property
    def label(self) -> int:
        """Global branch id: two per analyticity interval."""
        return 2 * self.interval + self.j


def mu_values(z, ds: DirectionStiffness, fn: ZhikovFunction) -> np.ndarray:
    """Ascending eigenvalues of ``A_theta^{-1/2} B(z) A_theta^{-1/2}``: (nz, 2)."""
    B = fn.matrices(z)
    S = ds.inv_sqrt
    T = np.einsum("ij,zjk,kl->zil", S, B, S)
    lo, hi = sym2_eigvalsh(T[:, 0, 0], 0.5 * (T[:, 0, 1] + T[:, 1, 0]), T[:, 1, 1])
    return np.column_stack([lo, hi])


def dispersion_branches(
    z_grid,
    theta,
    eps: float,
    data=None,
    A_macro=None,
    tol_gap: float = TOL_GAP,
    fn: ZhikovFunction | None = None,
    ds: DirectionStiffness | None = None,
) -> list[DispersionBranch]:
    """Branches of the dispersion relation along ``theta``.

    At each ``z`` one sample is emitted per eigenvalue of ``B(z)`` that is
    ``>= -tol_gap``. The samples use the matching top eigenvalues ``mu``
    (the congruence keeps the sign pattern), with ``mu`` in ``[-tol_gap, 0)``
    or any rounding-level negative value clamped to zero. Branch index ``j``
    is the ascending rank of ``mu`` and is reset at every pole.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    fn = fn or ZhikovFunction(data)
    ds = ds or direction_stiffness(A_macro, theta)
    z = np.asarray(z_grid, dtype=float)
    if z.ndim != 1 or np.any(np.diff(z) <= 0):
        raise GridError("z grid must be one-dimensional and strictly increasing")
    betas = fn.betas(z)
    count = np.sum(betas >= -tol_gap, axis=1)
    mu = mu_values(z, ds, fn)
    ids = fn.interval_ids(z)
    branches = []
    for interval in np.unique(ids):
        sel = ids == interval
        for j in (0, 1):
            on = sel & (count >= 2 - j)
            if not np.any(on):
                continue
            m = np.maximum(mu[on, j], 0.0)
            branches.append(DispersionBranch(ds.theta, j, int(interval), z[on], eps * np.sqrt(m), mu[on, j]))
    return branches


def branch_counts(z, fn: ZhikovFunction, tol_gap: float = TOL_GAP) -> np.ndarray:
    """Number of eigenvalues of ``B(z)`` that are ``>= -tol_gap``."""
    return np.sum(fn.betas(z) >= -tol_gap, axis=1)


def default_theta_grid(n: int = 64) -> np.ndarray:
    """``n`` uniform unit directions on the half circle ``[0, pi)``."""
    a = np.pi * np.arange(n) / n
    return np.column_stack([np.cos(a), np.sin(a)])


@dataclass
class SurfaceTable:
    """Rows sorted by (theta index, branch, z)."""

    theta: np.ndarray
    branch: np.ndarray
    z: np.ndarray
    chi_norm: np.ndarray
    eps: float

    def __len__(self):
        return len(self.z)

    @property
    def chi(self) -> np.ndarray:
        return self.theta * self.chi_norm[:, None]

    def write_csv(self, path, header: str = "") -> None:
        chi = self.chi
        with open(path, "w", newline="") as fh:
            if header:
                fh.write(header)
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["theta_x", "theta_y", "branch", "z", "chi_norm", "chi_x", "chi_y", "epsilon"])
            for t, b, zi, c, cv in zip(self.theta, self.branch, self.z, self.chi_norm, chi):
                w.writerow(
                    [f"{t[0]:.17g}", f"{t[1]:.17g}", int(b), f"{zi:.17g}", f"{c:.17g}", f"{cv[0]:.17g}", f"{cv[1]:.17g}", f"{self.eps:.17g}"]
                )


def dispersion_surface(z_grid, theta_grid, eps: float, data=None, A_macro=None, tol_gap: float = TOL_GAP, fn=None) -> SurfaceTable:
    """All branches over a set of directions."""
    fn = fn or ZhikovFunction(data)
    thetas, labels, zs, chis = [], [], [], []
    for t in np.atleast_2d(np.asarray(theta_grid, dtype=float)):
        for br in dispersion_branches(z_grid, t, eps, tol_gap=tol_gap, fn=fn, ds=direction_stiffness(A_macro, t)):
            n = len(br.z)
            thetas.append(np.broadcast_to(br.theta, (n, 2)))
            labels.append(np.full(n, br.label))
            zs.append(br.z)
            chis.append(br.chi_norm)
    if not zs:
        return SurfaceTable(np.zeros((0, 2)), np.zeros(0, int), np.zeros(0), np.zeros(0), eps)
    return SurfaceTable(np.concatenate(thetas), np.concatenate(labels), np.concatenate(zs), np.concatenate(chis), eps)


@dataclass(frozen=True)
class VelocityReport:
    ok: bool
    min_velocity: float
    n_interior: int


def group_velocity_check(branch: DispersionBranch) -> VelocityReport:
    """Centred differences ``dz/d|chi|`` at interior samples must be positive.

    Failures are reported, not raised. Branches with fewer than three
    samples report ``ok`` with no interior points.
    """
    z, c = branch.z, branch.chi_norm
    if len(z) < 3:
        return VelocityReport(True, float("inf"), 0)
    dz = z[2:] - z[:-2]
    dc = c[2:] - c[:-2]
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.where(dc > 0, dz / dc, np.where(dc == 0, np.inf, -np.inf))
    finite = v[np.isfinite(v)]
    vmin = float(np.min(v))
    ok = bool(np.all(dc > 0) and np.all(v > 0))
    return VelocityReport(ok, vmin if np.isfinite(vmin) or finite.size == 0 else float(finite.min()), len(v))


def determinant_residual(z: float, chi_norm: float, eps: float, ds: DirectionStiffness, fn: ZhikovFunction) -> tuple[float, float]:
    """``|det(eps^-2 |chi|^2 A_theta - B(z))|`` and its natural scale."""
    L = (chi_norm / eps) ** 2 * ds.A
    B = fn.matrices([z])[0]
    D = L - B
    det = D[0, 0] * D[1, 1] - D[0, 1] * D[1, 0]
    scale = (np.linalg.norm(L, 2) + np.linalg.norm(B, 2)) ** 2
    return abs(float(det)), float(scale)


def determinant_roots(z: float, eps: float, ds: DirectionStiffness, fn: ZhikovFunction, rtol: float = 1e-14) -> np.ndarray:
    """Non-negative roots ``|chi|`` at fixed ``z`` by bisection on the determinant.

    ``p(s) = det(s A_theta / eps^2 - B(z))`` is a quadratic in ``s = |chi|^2``
    with positive leading coefficient and two real roots in ``[-R, R]``,
    ``R = |B| / lambda_min(A_theta / eps^2)``. Its vertex separates them, so
    each root is bracketed by the vertex and one end of that interval.
    """
    B = fn.matrices([z])[0]
    A = ds.A / eps**2

    def p(s):
        D = s * A - B
        return D[0, 0] * D[1, 1] - D[0, 1] * D[1, 0]

    a2 = A[0, 0] * A[1, 1] - A[0, 1] ** 2
    a1 = -(A[0, 0] * B[1, 1] + A[1, 1] * B[0, 0] - 2 * A[0, 1] * B[0, 1])
    vertex = -a1 / (2 * a2)
    R = 1.01 * np.linalg.norm(B, 2) / np.linalg.eigvalsh(A)[0] + 1e-300
    roots = []
    for a, b in ((-R, vertex), (vertex, R)):
        if p(vertex) >= 0:
            roots.append(vertex)
            continue
        for _ in range(400):
            m = 0.5 * (a + b)
            if (p(m) > 0) == (p(a) > 0):
                a = m
            else:
                b = m
            if abs(b - a) <= rtol * max(abs(a), abs(b)):
                break
        roots.append(0.5 * (a + b))
    return np.sqrt(np.array([r for r in roots if r >= 0.0]))
