"""Data types, the real Hermitian parameterization and derived InSAR products.

Covariance matrices are stored as D*D real numbers per pixel: the D diagonal
entries, then the real parts of the strict upper triangle (row-major over
(i, j) with i < j), then the matching imaginary parts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

HERMITIAN_RTOL = 1e-9


class MuchaproError(ValueError):
    """Invalid input or precondition violation (a user error)."""


class InvariantError(RuntimeError):
    """Internal invariant violated (a bug, not bad input)."""


@lru_cache(maxsize=None)
def upper_pairs(D: int) -> tuple[tuple[int, int], ...]:
    """Row-major (i, j) index pairs of the strict upper triangle."""
    return tuple((i, j) for i in range(D) for j in range(i + 1, D))


def _pair_index(D):
    pairs = upper_pairs(D)
    rows = np.array([p[0] for p in pairs], dtype=int)
    cols = np.array([p[1] for p in pairs], dtype=int)
    return rows, cols


def hermitian_asymmetry(C):
    """Max |C - C^H| over the last two axes, relative to max |C|."""
    C = np.asarray(C)
    asym = np.abs(C - np.conj(np.swapaxes(C, -1, -2))).max(axis=(-1, -2))
    scale = np.abs(C).max(axis=(-1, -2))
    return np.where(scale > 0, asym / np.where(scale > 0, scale, 1.0), asym)


def check_hermitian(C, rtol=HERMITIAN_RTOL):
    C = np.asarray(C)
    if C.ndim < 2 or C.shape[-1] != C.shape[-2]:
        raise MuchaproError(f"expected square matrices, got shape {C.shape}")
    rel = hermitian_asymmetry(C)
    worst = float(np.max(rel)) if rel.size else 0.0
    if worst > rtol:
        raise MuchaproError(
            f"matrix is not Hermitian: max relative asymmetry {worst:.3e} > {rtol:g}")


def vectorize_hermitian(C, check=True):
    """Map Hermitian ``(..., D, D)`` matrices to real ``(..., D*D)`` vectors."""
    C = np.asarray(C)
    if check:
        check_hermitian(C)
    D = C.shape[-1]
    r, c = _pair_index(D)
    diag = np.real(np.diagonal(C, axis1=-2, axis2=-1))
    off = C[..., r, c]
    return np.concatenate([diag, off.real, off.imag], axis=-1).astype(np.float64)


def devectorize_hermitian(c):
    """Inverse of :func:`vectorize_hermitian`."""
    c = np.asarray(c, dtype=np.float64)
    n = c.shape[-1]
    D = int(round(np.sqrt(n)))
    if D * D != n:
        raise MuchaproError(f"vector length {n} is not a perfect square")
    r, k = _pair_index(D)
    m = len(r)
    C = np.zeros(c.shape[:-1] + (D, D), dtype=np.complex128)
    idx = np.arange(D)
    C[..., idx, idx] = c[..., :D]
    off = c[..., D:D + m] + 1j * c[..., D + m:]
    C[..., r, k] = off
    C[..., k, r] = np.conj(off)
    return C


def quadratic_form(C, p):
    """Return p^H C p (real) for Hermitian C."""
    C = np.asarray(C, dtype=np.complex128)
    p = np.asarray(p, dtype=np.complex128)
    if C.shape[-1] != p.shape[-1] or C.shape[-2] != p.shape[-1]:
        raise MuchaproError(f"dimension mismatch: C {C.shape} vs p {p.shape}")
    val = np.einsum("...i,...ij,...j->...", np.conj(p), C, p)
    scale = np.einsum("...i,...ij,...j->...", np.abs(p), np.abs(C), np.abs(p))
    if np.any(np.abs(val.imag) > 1e-12 * np.maximum(scale, 1e-300)):
        raise MuchaproError("quadratic form has a non-negligible imaginary part; C not Hermitian")
    return val.real


def _frozen(a):
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class MultiChannelSLCImage:
    """D complex channels on an H x W grid, indexed (channel, row, col)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim == 2:
            v = v[None]
        if v.ndim != 3 or min(v.shape) < 1:
            raise MuchaproError(f"expected a (D, H, W) array, got shape {v.shape}")
        v = v.astype(np.complex128)
        if not np.all(np.isfinite(v)):
            raise MuchaproError("image contains non-finite values")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def D(self):
        return self.values.shape[0]

    @property
    def height(self):
        return self.values.shape[1]

    @property
    def width(self):
        return self.values.shape[2]

    @property
    def shape(self):
        return self.values.shape[1:]

    def channel(self, d):
        return self.values[d]


@dataclass(frozen=True)
class CovarianceField:
    """Per-pixel Hermitian D x D covariances in the real parameterization.

    ``values`` has shape ``(D*D, H, W)``; plane order is diagonals, Re upper,
    Im upper. ``meta`` carries diagnostics (clip counts, residuals, ...).
    """

    values: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3:
            raise MuchaproError(f"expected a (D*D, H, W) array, got shape {v.shape}")
        D = int(round(np.sqrt(v.shape[0])))
        if D < 1 or D * D != v.shape[0]:
            raise MuchaproError(f"{v.shape[0]} planes is not a perfect square")
        if not np.all(np.isfinite(v)):
            raise MuchaproError("covariance field contains non-finite values")
        object.__setattr__(self, "values", _frozen(v))

    @classmethod
    def from_matrices(cls, M, check=True, meta=None):
        """Build from complex matrices of shape ``(H, W, D, D)``."""
        c = vectorize_hermitian(M, check=check)
        return cls(np.moveaxis(c, -1, 0), meta=dict(meta or {}))

    @classmethod
    def constant(cls, C, height, width):
        C = np.asarray(C, dtype=np.complex128)
        M = np.broadcast_to(C, (height, width) + C.shape)
        return cls.from_matrices(M)

    @property
    def D(self):
        return int(round(np.sqrt(self.values.shape[0])))

    @property
    def height(self):
        return self.values.shape[1]

    @property
    def width(self):
        return self.values.shape[2]

    @property
    def shape(self):
        return self.values.shape[1:]

    def matrices(self):
        """Complex matrices of shape ``(H, W, D, D)``."""
        return devectorize_hermitian(np.moveaxis(self.values, 0, -1))

    def diagonal(self, d):
        return self.values[d]

    def entry(self, i, j):
        """Complex plane C_ij."""
        D = self.D
        if not (0 <= i < D and 0 <= j < D):
            raise MuchaproError(f"channel index ({i}, {j}) out of range for D={D}")
        if i == j:
            return self.values[i].astype(np.complex128)
        if i > j:
            return np.conj(self.entry(j, i))
        m = D * (D - 1) // 2
        k = upper_pairs(D).index((i, j))
        return self.values[D + k] + 1j * self.values[D + m + k]

    def with_diagonal(self, d, plane):
        v = np.array(self.values)
        v[d] = plane
        return CovarianceField(v, meta=dict(self.meta))


def interferometric_products(C: CovarianceField, i: int, j: int):
    """Reflectivities, interferometric phase and coherence for channels i, j.

    Phase lies in (-pi, pi] with arg(0) = 0. Coherence may exceed 1 for
    estimates that were not passed through :func:`enforce_pd_field`; the
    count of such pixels is returned under ``"n_coherence_above_one"``.
    """
    D = C.D
    if i == j or not (0 <= i < D and 0 <= j < D):
        raise MuchaproError(f"need two distinct channels < {D}, got ({i}, {j})")
    ri, rj = C.diagonal(i), C.diagonal(j)
    for d, r in ((i, ri), (j, rj)):
        bad = np.argwhere(r <= 0)
        if len(bad):
            row, col = bad[0]
            raise MuchaproError(
                f"nonpositive reflectivity in channel {d} at pixel (row={row}, col={col}); "
                "apply enforce_pd first")
    cij = C.entry(i, j)
    phase = np.angle(cij)
    phase[phase <= -np.pi] = np.pi
    coherence = np.abs(cij) / np.sqrt(ri * rj)
    return {
        "reflectivity_i": np.array(ri),
        "reflectivity_j": np.array(rj),
        "phase": phase,
        "coherence": coherence,
        "n_coherence_above_one": int(np.count_nonzero(coherence > 1)),
    }
