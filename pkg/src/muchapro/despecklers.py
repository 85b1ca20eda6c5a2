"""Single-channel despecklers: complex SLC image -> nonnegative reflectivity.

Every despeckler is a callable ``f(s) -> v`` on 2-D arrays. The built-ins
only look at |s|^2; the complex input leaves room for methods that use the
real and imaginary parts separately.
"""

from __future__ import annotations

import logging
import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy import ndimage

from .core import MuchaproError

log = logging.getLogger(__name__)

EULER_GAMMA = np.euler_gamma


def _check_image(s):
    s = np.asarray(s)
    if s.ndim != 2:
        raise MuchaproError(f"expected a 2-D single-channel image, got shape {s.shape}")
    return s


def intensity(s):
    s = np.asarray(s)
    return s.real ** 2 + s.imag ** 2


class LinearWeights:
    """Data-independent weights w_lm for v_l = sum_m w_lm x_m.

    Either a shift-invariant kernel with mirror boundary, or an explicit
    sparse ``N x N`` weight matrix (guided filtering). ``global_mean`` is the
    degenerate kernel covering the whole image.
    """

    def __init__(self, kernel=None, matrix=None, shape=None, global_mean=False):
        if (kernel is not None) + (matrix is not None) + bool(global_mean) != 1:
            raise MuchaproError("give exactly one of kernel, matrix, global_mean")
        self.kernel = self.matrix = None
        self.global_mean = bool(global_mean)
        self.shape = shape
        if kernel is not None:
            k = np.atleast_2d(np.asarray(kernel, dtype=np.float64))
            if np.any(k < 0) or not np.all(np.isfinite(k)):
                raise MuchaproError("kernel weights must be finite and nonnegative")
            total = k.sum()
            if total == 0:
                raise MuchaproError("kernel weights sum to 0")
            self.kernel = k / total
        if matrix is not None:
            W = sp.csr_matrix(matrix, dtype=np.float64)
            if shape is None or W.shape != (shape[0] * shape[1],) * 2:
                raise MuchaproError("weight matrix needs a matching image shape (H, W)")
            if W.nnz and W.data.min() < 0:
                raise MuchaproError("weights must be nonnegative")
            rows = np.asarray(W.sum(axis=1)).ravel()
            if np.any(rows == 0):
                raise MuchaproError("a weight row sums to 0")
            self.matrix = sp.diags(1.0 / rows) @ W

    @classmethod
    def boxcar(cls, size):
        return cls(kernel=np.ones((size, size)))

    @classmethod
    def gaussian(cls, sigma, truncate=4.0):
        r = int(truncate * sigma + 0.5)
        x = np.arange(-r, r + 1)
        g = np.exp(-0.5 * (x / sigma) ** 2)
        return cls(kernel=np.outer(g, g))

    @classmethod
    def guided(cls, guide, radius=2, h=0.5):
        """Bilateral-style weights driven only by an external guide image."""
        guide = np.asarray(guide, dtype=np.float64)
        H, W = guide.shape
        idx = np.arange(H * W).reshape(H, W)
        rows, cols, vals = [], [], []
        for dy in range(-radius, radius + 1):
            for dx in range(-radius, radius + 1):
                ys = np.arange(H)[:, None] + dy
                xs = np.arange(W)[None, :] + dx
                ok = (ys >= 0) & (ys < H) & (xs >= 0) & (xs < W)
                ys_c, xs_c = np.clip(ys, 0, H - 1), np.clip(xs, 0, W - 1)
                ys_c, xs_c = np.broadcast_arrays(ys_c, xs_c)
                diff = guide - guide[ys_c, xs_c]
                w = np.exp(-(diff / h) ** 2)
                rows.append(idx[ok])
                cols.append(idx[ys_c, xs_c][ok])
                vals.append(w[ok])
        M = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(H * W, H * W))
        return cls(matrix=M, shape=(H, W))

    def apply(self, x):
        """Filter the last two axes of a real or complex array."""
        x = np.asarray(x)
        if np.iscomplexobj(x):
            return self.apply(x.real) + 1j * self.apply(x.imag)
        x = x.astype(np.float64)
        if self.global_mean:
            m = x.mean(axis=(-2, -1), keepdims=True)
            return np.broadcast_to(m, x.shape).copy()
        if self.kernel is not None:
            k = self.kernel
            if x.ndim > 2:
                k = k.reshape((1,) * (x.ndim - 2) + k.shape)
            return ndimage.correlate(x, k, mode="mirror")
        H, W = x.shape[-2:]
        if (H, W) != tuple(self.shape):
            raise MuchaproError(f"weight matrix built for {self.shape}, image is {(H, W)}")
        flat = x.reshape(-1, H * W).T
        return np.asarray(self.matrix @ flat).T.reshape(x.shape)


@dataclass(frozen=True)
class Identity:
    name: str = "identity"

    def __call__(self, s):
        return intensity(_check_image(s))


@dataclass(frozen=True)
class Linear:
    weights: LinearWeights
    name: str = "linear"

    def __call__(self, s):
        return np.maximum(self.weights.apply(intensity(_check_image(s))), 0.0)


@dataclass(frozen=True)
class LogGaussian:
    """Gaussian smoothing in the log domain with a 1-look bias correction.

    E[ln I] = ln v - gamma for exponential intensities, so the smoothed log is
    shifted back by Euler's constant before exponentiation.
    """

    sigma: float
    name: str = "loggauss"

    def __post_init__(self):
        if not self.sigma > 0:
            raise MuchaproError(f"sigma must be > 0, got {self.sigma}")

    def __call__(self, s):
        I = intensity(_check_image(s))
        mean = I.mean()
        if mean == 0:
            log.warning("all-zero image passed to log-Gaussian despeckler")
            return np.zeros(I.shape)
        eps = 1e-10 * mean
        smooth = ndimage.gaussian_filter(np.log(I + eps), self.sigma, mode="mirror")
        return np.exp(smooth + EULER_GAMMA)


@dataclass(frozen=True)
class IntensityAdaptive:
    """Weights computed from the image's own intensity (not linear).

    A negative control: it violates the data-independence required for
    multi-channel and projection-wise filtering to coincide.
    """

    radius: int = 2
    h: float = 1.0
    name: str = "adaptive"

    def __call__(self, s):
        I = intensity(_check_image(s))
        return LinearWeights.guided(np.log(I + 1e-10 * I.mean()), self.radius, self.h).apply(I)


@dataclass(frozen=True)
class External:
    """Run ``<command> <input.mcslc> <output.refl>`` and read the result."""

    command: tuple
    timeout: float | None = None
    name: str = "external"

    @classmethod
    def from_string(cls, cmd, timeout=None):
        return cls(tuple(shlex.split(cmd)), timeout)

    def __call__(self, s):
        from .io import read_reflectivity, write_mcslc

        s = _check_image(s)
        with tempfile.TemporaryDirectory(prefix="muchapro-") as tmp:
            src = Path(tmp) / "input.mcslc"
            dst = Path(tmp) / "output.refl"
            write_mcslc(src, s[None])
            try:
                proc = subprocess.run([*self.command, str(src), str(dst)], capture_output=True,
                                      text=True, timeout=self.timeout)
            except (FileNotFoundError, PermissionError) as exc:
                raise MuchaproError(f"cannot spawn external despeckler {self.command[0]!r}: {exc}") from exc
            if proc.returncode != 0:
                raise MuchaproError(
                    f"external despeckler exited with status {proc.returncode}: {proc.stderr.strip()[-2000:]}")
            try:
                v = read_reflectivity(dst)
            except (OSError, MuchaproError) as exc:
                raise MuchaproError(f"external despeckler produced unreadable output: {exc}") from exc
        if v.shape != s.shape:
            raise MuchaproError(f"external despeckler returned shape {v.shape}, expected {s.shape}")
        if not np.all(np.isfinite(v)):
            raise MuchaproError("external despeckler returned non-finite values")
        return np.maximum(v.astype(np.float64), 0.0)


def despeckle_identity(s):
    return Identity()(s)


def despeckle_linear(s, weights: LinearWeights):
    return Linear(weights)(s)


def despeckle_log_gaussian(s, sigma):
    return LogGaussian(sigma)(s)


def despeckle_external(s, command):
    if isinstance(command, str):
        return External.from_string(command)(s)
    return External(tuple(command))(s)


def parse_despeckler(text: str):
    """Build a despeckler from ``NAME[:PARAM]``.

    identity | boxcar:SIZE | gauss:SIGMA (linear) | loggauss:SIGMA | external:COMMAND
    """
    name, _, param = text.partition(":")
    name = name.strip().lower()
    try:
        if name == "identity":
            return Identity()
        if name == "boxcar":
            size = int(param or 5)
            return Linear(LinearWeights.boxcar(size), name=f"boxcar:{size}")
        if name == "gauss":
            sigma = float(param or 1)
            return Linear(LinearWeights.gaussian(sigma), name=f"gauss:{sigma:g}")
        if name == "loggauss":
            return LogGaussian(float(param or 2))
        if name == "external":
            if not param:
                raise MuchaproError("external despeckler needs a command: external:COMMAND")
            return External.from_string(param)
    except ValueError as exc:
        if isinstance(exc, MuchaproError):
            raise
        raise MuchaproError(f"bad despeckler parameter in {text!r}: {exc}") from exc
    raise MuchaproError(f"unknown despeckler {name!r}")
