"""Positive-definiteness post-processing of estimated covariances.

Diagonals are floored at a thermal-noise reflectivity, then every pairwise
coherence above ``rho_max`` is scaled down to ``rho_max``. Coherences use the
floored diagonals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CovarianceField, MuchaproError, check_hermitian, devectorize_hermitian, upper_pairs, vectorize_hermitian


@dataclass(frozen=True)
class PDEnforceParams:
    r_thml: float
    rho_max: float = 0.99

    def __post_init__(self):
        if not self.r_thml > 0:
            raise MuchaproError(f"r_thml must be > 0, got {self.r_thml}")
        if not 0 < self.rho_max < 1:
            raise MuchaproError(f"rho_max must lie in (0, 1), got {self.rho_max}")

    @classmethod
    def for_field(cls, C: CovarianceField, rho_max=0.99, rel_floor=1e-3):
        """Floor at ``rel_floor`` times the median estimated reflectivity."""
        med = float(np.median(C.values[:C.D]))
        r = rel_floor * med if med > 0 else np.finfo(float).tiny
        return cls(r, rho_max)


def _enforce_planes(c, D, params):
    """Apply to real-parameterized vectors ``c`` of shape ``(D*D, ...)``."""
    out = np.array(c, dtype=np.float64)
    out[:D] = np.maximum(params.r_thml, out[:D])
    m = D * (D - 1) // 2
    for k, (i, j) in enumerate(upper_pairs(D)):
        re, im = out[D + k], out[D + m + k]
        denom = np.sqrt(out[i] * out[j])
        g = np.maximum(np.hypot(re, im), np.abs(re + 1j * im)) / denom
        over = g > params.rho_max
        if not np.any(over):
            continue
        scale = params.rho_max / g[over]
        re_o, im_o = re[over] * scale, im[over] * scale
        # rounding can land one ulp above rho_max (and hypot and complex abs
        # may disagree by an ulp); nudge down until both agree the bound holds
        while True:
            mag = np.maximum(np.hypot(re_o, im_o), np.abs(re_o + 1j * im_o))
            still = mag / denom[over] > params.rho_max
            if not np.any(still):
                break
            re_o[still] = re_o[still] * (1 - 2 ** -52)
            im_o[still] = im_o[still] * (1 - 2 ** -52)
        re[over], im[over] = re_o, im_o
    return out


def enforce_pd(C, params: PDEnforceParams):
    """Single D x D Hermitian matrix version."""
    C = np.asarray(C, dtype=np.complex128)
    check_hermitian(C)
    D = C.shape[-1]
    c = vectorize_hermitian(C)
    return devectorize_hermitian(_enforce_planes(c[:, None], D, params)[:, 0])


def enforce_pd_field(C: CovarianceField, params: PDEnforceParams) -> CovarianceField:
    out = _enforce_planes(C.values, C.D, params)
    return CovarianceField(out, meta=dict(C.meta, pd_params=params))


def pd_pass_rate(C: CovarianceField):
    """Fraction of pixels whose matrix admits a Cholesky factorization."""
    M = C.matrices().reshape(-1, C.D, C.D)
    return float(np.mean(cholesky_ok(M)))


def cholesky_ok(M):
    M = np.asarray(M)
    ok = np.zeros(len(M), dtype=bool)
    for n, m in enumerate(M):
        try:
            np.linalg.cholesky(m)
            ok[n] = True
        except np.linalg.LinAlgError:
            pass
    return ok
