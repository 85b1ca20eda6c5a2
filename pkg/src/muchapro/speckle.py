"""Fully developed speckle simulation and covariance phantoms.

Random numbers come from a Philox counter-based generator. Pixel ``l``
(row-major index) always consumes the same block of counters, so the
output does not depend on how pixels are chunked or distributed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .core import CovarianceField, MuchaproError, MultiChannelSLCImage, check_hermitian

PSD_RTOL = 1e-10


def _raw_per_pixel(D):
    # 2 uniforms per channel, padded to whole Philox4x64 blocks
    return 4 * ((2 * D + 3) // 4)


def pixel_uniforms(seed, start, stop, D):
    """Uniforms in [0, 1) for pixels ``start..stop-1``, shape ``(n, 2D)``."""
    R = _raw_per_pixel(D)
    bg = np.random.Philox(key=int(seed))
    bg.advance(start * R // 4)
    raw = bg.random_raw((stop - start) * R).reshape(stop - start, R)[:, :2 * D]
    return (raw >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


def circular_white(seed, start, stop, D):
    """Standard complex circular Gaussian draws, E|w|^2 = 1, shape ``(n, D)``."""
    u = pixel_uniforms(seed, start, stop, D)
    r = np.sqrt(-np.log1p(-u[:, 0::2]))
    theta = 2 * np.pi * u[:, 1::2]
    return r * np.exp(1j * theta)


def sqrt_factors(M, rtol=PSD_RTOL):
    """Per-matrix A with A A^H = M; Cholesky, eigen fallback when singular.

    ``M`` has shape ``(n, D, D)``. Raises on matrices with eigenvalues below
    ``-rtol * lambda_max``, naming the first offending index.
    """
    M = np.asarray(M, dtype=np.complex128)
    check_hermitian(M)
    M = 0.5 * (M + np.conj(np.swapaxes(M, -1, -2)))
    w, U = np.linalg.eigh(M)
    lmax = np.maximum(np.abs(w).max(axis=-1), 0.0)
    bad = np.nonzero(w[:, 0] < -rtol * lmax)[0]
    if len(bad):
        err = MuchaproError(
            f"covariance {bad[0]} is indefinite (min eigenvalue {w[bad[0], 0]:.3e})")
        err.index = int(bad[0])
        raise err
    A = np.zeros_like(M)
    pd = w[:, 0] > rtol * lmax
    if np.any(pd):
        try:
            A[pd] = np.linalg.cholesky(M[pd])
        except np.linalg.LinAlgError:
            pd[:] = False
    rest = ~pd
    if np.any(rest):
        ws = np.sqrt(np.clip(w[rest], 0.0, None))
        A[rest] = U[rest] * ws[:, None, :]
    return A


def sample_goodman(truth: CovarianceField, seed: int, chunk: int = 1 << 16) -> MultiChannelSLCImage:
    """Draw one single-look complex image z_l = A_l w_l from ``truth``."""
    D, (H, W) = truth.D, truth.shape
    N = H * W
    M = truth.matrices().reshape(N, D, D)
    out = np.empty((N, D), dtype=np.complex128)
    for start in range(0, N, chunk):
        stop = min(N, start + chunk)
        try:
            A = sqrt_factors(M[start:stop])
        except MuchaproError as exc:
            if not hasattr(exc, "index"):
                raise
            row, col = divmod(start + exc.index, W)
            raise MuchaproError(
                f"covariance at pixel (row={row}, col={col}) is indefinite") from exc
        w = circular_white(seed, start, stop, D)
        out[start:stop] = np.einsum("nij,nj->ni", A, w)
    return MultiChannelSLCImage(out.T.reshape(D, H, W))


@dataclass(frozen=True)
class TransferKernel:
    """Real 2-D system response with odd side lengths and unit DC gain."""

    weights: np.ndarray

    def __post_init__(self):
        k = np.atleast_2d(np.asarray(self.weights))
        if np.iscomplexobj(k) or not np.all(np.isfinite(k)):
            raise MuchaproError("transfer kernel must be real and finite")
        k = k.astype(np.float64)
        if k.shape[0] % 2 == 0 or k.shape[1] % 2 == 0:
            raise MuchaproError(f"kernel sides must be odd, got {k.shape}")
        if abs(k.sum() - 1.0) > 1e-12:
            raise MuchaproError(f"kernel must sum to 1 (got {k.sum():.15g})")
        k.flags.writeable = False
        object.__setattr__(self, "weights", k)

    @classmethod
    def normalized(cls, k):
        k = np.atleast_2d(np.asarray(k, dtype=np.float64))
        return cls(k / k.sum())

    @classmethod
    def box(cls, size):
        return cls.normalized(np.ones((size, size)))

    @classmethod
    def apodized(cls, size=5, oversampling=1.25, alpha=0.6):
        """Separable Hamming-weighted sinc, a typical SLC system response."""
        half = size // 2
        x = np.arange(-half, half + 1)
        taper = alpha + (1 - alpha) * np.cos(np.pi * x / (half + 1))
        h = np.sinc(x / oversampling) * taper
        return cls.normalized(np.outer(h, h))


def apply_transfer(img: MultiChannelSLCImage, kernel: TransferKernel) -> MultiChannelSLCImage:
    """Convolve every channel with the same real kernel (mirror boundary)."""
    k = kernel.weights
    if k.shape[0] > img.height or k.shape[1] > img.width:
        raise MuchaproError(f"kernel {k.shape} larger than image {img.shape}")
    v = img.values
    out = np.empty_like(v)
    for d in range(img.D):
        out[d] = (ndimage.convolve(v[d].real, k, mode="mirror")
                  + 1j * ndimage.convolve(v[d].imag, k, mode="mirror"))
    return MultiChannelSLCImage(out)


@dataclass
class PhantomSpec:
    """Synthetic scene description.

    kind="constant": ``matrices[0]`` everywhere.
    kind="fringes": D=2, reflectivity ``reflectivity``, a linear phase ramp
    with ``frequency`` = (cycles/pixel along columns, along rows) and a
    coherence ``coherence`` given as a scalar or a (top, bottom) pair varied
    linearly over rows.
    kind="mosaic": ``grid`` = (rows, cols) tiles, tile t uses
    ``matrices[t % len(matrices)]``.
    """

    kind: str
    height: int
    width: int
    D: int = 2
    matrices: list = field(default_factory=list)
    reflectivity: float = 1.0
    frequency: tuple = (1 / 32, 0.0)
    coherence: float | tuple = 1.0
    phase0: float = 0.0
    grid: tuple = (2, 2)


def fringe_phase(spec: PhantomSpec):
    rows, cols = np.mgrid[0:spec.height, 0:spec.width]
    fx, fy = spec.frequency
    return 2 * np.pi * (fx * cols + fy * rows) + spec.phase0


def coherence_map(spec: PhantomSpec):
    g = spec.coherence
    if np.ndim(g) == 0:
        return np.full((spec.height, spec.width), float(g))
    top, bottom = g
    col = np.linspace(top, bottom, spec.height)
    return np.repeat(col[:, None], spec.width, axis=1)


def make_phantom(spec: PhantomSpec) -> CovarianceField:
    H, W = spec.height, spec.width
    if spec.kind == "constant":
        C = np.asarray(spec.matrices[0] if spec.matrices else np.eye(spec.D), dtype=np.complex128)
        _check_psd(C[None])
        return CovarianceField.constant(C, H, W)
    if spec.kind == "fringes":
        if spec.D != 2:
            raise MuchaproError("fringe phantoms are two-channel")
        gamma = coherence_map(spec)
        if gamma.min() < 0 or gamma.max() > 1:
            raise MuchaproError("coherence must lie in [0, 1]")
        phi = fringe_phase(spec)
        r = float(spec.reflectivity)
        c12 = r * gamma * np.exp(1j * phi)
        v = np.stack([np.full((H, W), r), np.full((H, W), r), c12.real, c12.imag])
        return CovarianceField(v)
    if spec.kind == "mosaic":
        mats = [np.asarray(m, dtype=np.complex128) for m in spec.matrices]
        if not mats:
            raise MuchaproError("mosaic phantom needs at least one matrix")
        _check_psd(np.stack(mats))
        gr, gc = spec.grid
        rb = np.minimum(np.arange(H) * gr // H, gr - 1)
        cb = np.minimum(np.arange(W) * gc // W, gc - 1)
        tile = (rb[:, None] * gc + cb[None, :]) % len(mats)
        M = np.stack(mats)[tile]
        return CovarianceField.from_matrices(M)
    raise MuchaproError(f"unknown phantom kind {spec.kind!r}")


def _check_psd(M):
    check_hermitian(M)
    w = np.linalg.eigvalsh(M)
    if np.any(w[:, 0] < -PSD_RTOL * np.abs(w).max(axis=-1)):
        raise MuchaproError("phantom matrices must be positive semi-definite")
