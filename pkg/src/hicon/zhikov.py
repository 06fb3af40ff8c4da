"""The truncated matrix-valued Zhikov function ``B(z)`` and its band gaps.

``B(z) = z I + z^2 sum_k <phi_k> <phi_k>^T / (eta_k - z)`` for real ``z``.
Only modes whose mean exceeds the noise floor contribute; the others are
treated as mean-zero and create no pole.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .bloch import BlochData
from .errors import GridError, PoleError

POLE_GUARD = 1e-13
TOL_GAP = 1e-10


@dataclass(frozen=True)
class ZhikovEval:
    z: float
    B: np.ndarray
    betas: tuple[float, float]
    near_pole: bool


def sym2_eigvalsh(a, b, d):
    """Ascending eigenvalues of ``[[a, b], [b, d]]`` (broadcasts).

    The eigenvalue of larger magnitude comes from ``tr/2 +- r``; the other
    from ``det / that`` so it does not suffer cancellation.
    """
    a, b, d = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float), np.asarray(d, float))
    # work on entries scaled to magnitude <= 1 so det does not under/overflow
    s = np.maximum(np.maximum(np.abs(a), np.abs(b)), np.abs(d))
    s = np.where(s > 0, s, 1.0)
    a, b, d = a / s, b / s, d / s
    half_tr = 0.5 * (a + d)
    rad = np.hypot(0.5 * (a - d), b)
    det = a * d - b * b
    pos = half_tr >= 0
    big = np.where(pos, half_tr + rad, half_tr - rad)
    with np.errstate(divide="ignore", invalid="ignore"):
        small = np.where(big != 0, det / np.where(big != 0, big, 1.0), 0.0)
    lo = s * np.where(pos, small, big)
    hi = s * np.where(pos, big, small)
    return lo, hi


class ZhikovFunction:
    """Vectorised evaluator for fixed Bloch data.

    Parameters
    ----------
    data : BlochData
    delta_pole : float, optional
        Distance to a contributing pole below which ``near_pole`` is set;
        defaults to ``1e-3 * eta_1``.
    mean_rel : float
        Modes with ``|<phi>| < mean_rel * sqrt(|Y_soft|)`` carry no pole.
    """

    def __init__(self, data: BlochData, delta_pole: float | None = None, mean_rel: float = 1e-8):
        self.data = data
        mask = data.contributing(mean_rel)
        self.poles = data.etas[mask]
        self.means = data.means[mask]
        self.delta_pole = 1e-3 * data.etas[0] if delta_pole is None else float(delta_pole)
        self._outer = np.einsum("ki,kj->kij", self.means, self.means)

    def _check(self, z: np.ndarray) -> None:
        if self.poles.size == 0:
            return
        dist = np.abs(z[:, None] - self.poles[None, :])
        bad = dist < POLE_GUARD * np.abs(self.poles)[None, :]
        if np.any(bad):
            zi, ki = np.argwhere(bad)[0]
            raise PoleError(f"z = {z[zi]!r} coincides with the pole eta = {self.poles[ki]!r}")

    def matrices(self, z) -> np.ndarray:
        """``B(z)`` for an array of frequencies: (nz, 2, 2)."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        self._check(z)
        B = np.zeros((len(z), 2, 2))
        B[:, 0, 0] = z
        B[:, 1, 1] = z
        if self.poles.size:
            w = z[:, None] ** 2 / (self.poles[None, :] - z[:, None])
            B += np.einsum("zk,kij->zij", w, self._outer)
        B[:, 1, 0] = B[:, 0, 1]
        return B

    def derivative(self, z) -> np.ndarray:
        """Exact ``B'(z)`` (nz, 2, 2)."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        self._check(z)
        D = np.zeros((len(z), 2, 2))
        D[:, 0, 0] = 1.0
        D[:, 1, 1] = 1.0
        if self.poles.size:
            eta = self.poles[None, :]
            zz = z[:, None]
            w = (2 * zz * (eta - zz) + zz**2) / (eta - zz) ** 2
            D += np.einsum("zk,kij->zij", w, self._outer)
        D[:, 1, 0] = D[:, 0, 1]
        return D

    def betas(self, z) -> np.ndarray:
        """Ascending eigenvalues of ``B(z)``: (nz, 2)."""
        B = self.matrices(z)
        lo, hi = sym2_eigvalsh(B[:, 0, 0], B[:, 0, 1], B[:, 1, 1])
        return np.column_stack([lo, hi])

    def near_pole(self, z) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        if self.poles.size == 0:
            return np.zeros(len(z), dtype=bool)
        return np.min(np.abs(z[:, None] - self.poles[None, :]), axis=1) < self.delta_pole

    def interval_ids(self, z) -> np.ndarray:
        """Index of the analyticity interval (number of poles below ``z``)."""
        return np.searchsorted(self.poles, np.asarray(z, dtype=float), side="left")

    def __call__(self, z: float) -> ZhikovEval:
        B = self.matrices([z])[0]
        lo, hi = sym2_eigvalsh(B[0, 0], B[0, 1], B[1, 1])
        return ZhikovEval(float(z), B, (float(lo), float(hi)), bool(self.near_pole([z])[0]))


def zhikov_matrix(z: float, data: BlochData, delta_pole: float | None = None) -> ZhikovEval:
    """Evaluate ``B(z)`` and its ordered eigenvalues at one real frequency."""
    return ZhikovFunction(data, delta_pole)(z)


def check_grid(z_grid, fn: ZhikovFunction, ratio: float = 50.0) -> np.ndarray:
    """Validate a frequency grid against the pole spacing; returns it as an array."""
    z = np.asarray(z_grid, dtype=float)
    if z.ndim != 1 or len(z) < 2:
        raise GridError("z grid needs at least two points")
    if np.any(np.diff(z) <= 0):
        raise GridError("z grid must be strictly increasing")
    poles = fn.poles[(fn.poles >= z[0]) & (fn.poles <= z[-1])]
    if len(poles) >= 2:
        limit = np.min(np.diff(poles)) / ratio
        if np.max(np.diff(z)) > limit:
            raise GridError(f"z spacing {np.max(np.diff(z)):.3e} exceeds min pole gap / {ratio:g} = {limit:.3e}")
    return z


def find_band_gaps(
    z_grid,
    data: BlochData,
    tol_gap: float = TOL_GAP,
    xtol: float = 1e-8,
    fn: ZhikovFunction | None = None,
) -> list[tuple[float, float]]:
    """Maximal frequency intervals inside the grid range where ``beta_2 < -tol_gap``.

    Endpoints between two grid points are located by bisection on
    ``beta_2 + tol_gap``, or placed on the pole when one separates them
    (``beta_2`` jumps there rather than crossing zero).
    """
    fn = fn or ZhikovFunction(data)
    z = check_grid(z_grid, fn)
    beta2 = fn.betas(z)[:, 1]
    neg = beta2 < -tol_gap
    f = lambda t: fn.betas([t])[0, 1] + tol_gap  # noqa: E731

    def bisect(a, b, rising):
        while b - a > xtol * max(1.0, abs(a)):
            m = 0.5 * (a + b)
            if (f(m) < 0) == rising:
                a = m
            else:
                b = m
        return 0.5 * (a + b)

    def edge(lo, hi, rising):
        inside = fn.poles[(fn.poles > lo) & (fn.poles < hi)]
        if inside.size == 0:
            return bisect(lo, hi, rising)
        if not rising:
            # beta_2 is negative from the last pole up to ``hi``
            return float(inside[-1])
        # beta_2 tends to +inf below the first pole, so it crosses zero before it
        return bisect(lo, float(inside[0]) * (1 - 1e-12), rising)

    gaps = []
    i, n = 0, len(z)
    while i < n:
        if not neg[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and neg[j + 1]:
            j += 1
        left = z[0] if i == 0 else edge(z[i - 1], z[i], rising=False)
        right = z[-1] if j == n - 1 else edge(z[j], z[j + 1], rising=True)
        gaps.append((float(left), float(right)))
        i = j + 1
    return gaps




def write_beta_csv(path, z, fn: ZhikovFunction, header: str = "") -> None:
    betas = fn.betas(z)
    near = fn.near_pole(z)
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(header)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["z", "beta1", "beta2", "near_pole"])
        for zi, (b1, b2), p in zip(z, betas, near):
            w.writerow([f"{zi:.17g}", f"{b1:.17g}", f"{b2:.17g}", int(p)])
