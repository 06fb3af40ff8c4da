"""Rank-4 elasticity tensors in 2D and the quasimomentum operator ``X_chi``.

Symmetric 2x2 matrices are stored as 3-vectors ``(e11, e22, sqrt(2) e12)``
(the orthonormal "Mandel" flavour of Voigt notation), so that the Frobenius
product ``A : B`` equals the dot product of the vectors and a tensor with
minor and major symmetries is a symmetric 3x3 matrix.
"""
from __future__ import annotations

import math
import warnings

import numpy as np

SQRT2 = math.sqrt(2.0)
_PAIRS = ((0, 0), (1, 1), (0, 1))


def to_voigt(sym: np.ndarray) -> np.ndarray:
    """Symmetric (..., 2, 2) array -> (..., 3) vector."""
    sym = np.asarray(sym)
    return np.stack([sym[..., 0, 0], sym[..., 1, 1], SQRT2 * sym[..., 0, 1]], axis=-1)


def from_voigt(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v)
    off = v[..., 2] / SQRT2
    row0 = np.stack([v[..., 0], off], axis=-1)
    row1 = np.stack([off, v[..., 1]], axis=-1)
    return np.stack([row0, row1], axis=-2)


class ElasticTensor:
    """Constant elasticity tensor with minor and major symmetries.

    Parameters
    ----------
    voigt : (3, 3) array
        Matrix of the tensor acting on ``(e11, e22, sqrt(2) e12)``.
    """

    def __init__(self, voigt):
        v = np.array(voigt, dtype=float)
        if v.shape != (3, 3):
            raise ValueError(f"expected a 3x3 Voigt matrix, got shape {v.shape}")
        scale = max(np.abs(v).max(), 1e-300)
        if np.abs(v - v.T).max() > 1e-14 * scale:
            raise ValueError("Voigt matrix is not symmetric (major symmetry violated)")
        self.voigt = 0.5 * (v + v.T)
        self.voigt.setflags(write=False)

    @classmethod
    def isotropic(cls, lam: float, mu: float) -> "ElasticTensor":
        """``A_ijkl = lam d_ij d_kl + 2 mu (d_ik d_jl + d_il d_kj)``.

        On symmetric strains this acts as ``A e = lam tr(e) I + 4 mu e``.
        """
        return cls(
            [
                [lam + 4.0 * mu, lam, 0.0],
                [lam, lam + 4.0 * mu, 0.0],
                [0.0, 0.0, 4.0 * mu],
            ]
        )

    @classmethod
    def from_full(cls, full) -> "ElasticTensor":
        full = np.asarray(full, dtype=float)
        if full.shape != (2, 2, 2, 2):
            raise ValueError("expected a (2, 2, 2, 2) array")
        minor = max(np.abs(full - full.transpose(1, 0, 2, 3)).max(), np.abs(full - full.transpose(0, 1, 3, 2)).max())
        if minor > 1e-14 * max(np.abs(full).max(), 1e-300):
            raise ValueError("tensor lacks minor symmetries")
        w = np.array([1.0, 1.0, SQRT2])
        v = np.empty((3, 3))
        for I, (i, j) in enumerate(_PAIRS):
            for J, (k, l) in enumerate(_PAIRS):
                v[I, J] = w[I] * w[J] * full[i, j, k, l]
        return cls(v)

    def full(self) -> np.ndarray:
        """Expand to the (2, 2, 2, 2) index form."""
        w = np.array([1.0, 1.0, SQRT2])
        out = np.empty((2, 2, 2, 2))
        idx = {(0, 0): 0, (1, 1): 1, (0, 1): 2, (1, 0): 2}
        for i in range(2):
            for j in range(2):
                for k in range(2):
                    for l in range(2):
                        I, J = idx[i, j], idx[k, l]
                        out[i, j, k, l] = self.voigt[I, J] / (w[I] * w[J])
        return out

    def scaled(self, s: float) -> "ElasticTensor":
        return ElasticTensor(s * self.voigt)

    def apply(self, strain: np.ndarray) -> np.ndarray:
        """Stress ``A e`` for a symmetric (..., 2, 2) strain."""
        return from_voigt(to_voigt(strain) @ self.voigt.T)

    @property
    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.voigt)[0])

    def is_positive_definite(self) -> bool:
        return self.min_eigenvalue > 0.0

    def __eq__(self, other):
        return isinstance(other, ElasticTensor) and np.array_equal(self.voigt, other.voigt)

    def __hash__(self):
        return hash(self.voigt.tobytes())

    def __repr__(self):
        return f"ElasticTensor({self.voigt.tolist()})"


def wrap_quasimomentum(chi) -> np.ndarray:
    """Map ``chi`` into the Brillouin zone ``[-pi, pi)^2``, warning if it moved."""
    chi = np.asarray(chi, dtype=float).reshape(2)
    inside = (chi >= -math.pi) & (chi < math.pi)
    if np.all(inside):
        return chi
    wrapped = np.where(inside, chi, np.mod(chi + math.pi, 2.0 * math.pi) - math.pi)
    warnings.warn(f"quasimomentum {chi.tolist()} wrapped into [-pi, pi)^2", RuntimeWarning, stacklevel=2)
    return wrapped


def x_chi_apply(chi, u) -> np.ndarray:
    """``X_chi u = sym(u (x) chi)`` as a symmetric 2x2 matrix."""
    c1, c2 = np.asarray(chi).reshape(2)
    u1, u2 = np.asarray(u).reshape(2)
    off = 0.5 * (c1 * u2 + c2 * u1)
    return np.array([[c1 * u1, off], [off, c2 * u2]])


def x_chi_matrix(chi) -> np.ndarray:
    """(3, 2) matrix mapping ``u`` to the Voigt vector of ``X_chi u``."""
    c1, c2 = np.asarray(chi, dtype=float).reshape(2)
    return np.array(
        [
            [c1, 0.0],
            [0.0, c2],
            [c2 / SQRT2, c1 / SQRT2],
        ]
    )
