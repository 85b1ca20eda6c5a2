"""Statistical checks on speckle statistics and on estimator agreement.

Phase and coherence error metrics for phantom experiments live here too.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .core import CovarianceField, MuchaproError, MultiChannelSLCImage
from .despecklers import Linear, LinearWeights
from .projection import ProjectionDirectionSet, build_operator, run_muchapro

SYMMETRY_THRESHOLD = 0.05


@dataclass
class ValidationEntry:
    name: str
    statistic: float
    threshold: float
    passed: bool | None
    n: int
    formula: str
    note: str = ""

    def line(self):
        status = {True: "PASS", False: "FAIL", None: "UNDEFINED"}[self.passed]
        text = (f"{self.name}: {status}  statistic={self.statistic:.6g}  "
                f"threshold={self.threshold:.6g}  n={self.n}  [{self.formula}]")
        return text + (f"  ({self.note})" if self.note else "")


@dataclass
class ValidationReport:
    entries: list = field(default_factory=list)

    def add(self, entry):
        if isinstance(entry, ValidationReport):
            self.entries.extend(entry.entries)
        else:
            self.entries.append(entry)
        return self

    @property
    def passed(self):
        return all(e.passed for e in self.entries)

    def __getitem__(self, name):
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def to_text(self, header=None):
        lines = list(header or [])
        lines += [e.line() for e in self.entries]
        return "\n".join(lines) + "\n"


def direct_linear_estimate(img: MultiChannelSLCImage, weights: LinearWeights) -> CovarianceField:
    """sum_l w_l z_l z_l^H, filtering each outer-product entry directly."""
    z = img.values
    outer = z[:, None] * np.conj(z[None, :])  # (D, D, H, W)
    filt = weights.apply(outer)
    M = np.moveaxis(filt, (0, 1), (-2, -1))
    M = 0.5 * (M + np.conj(np.swapaxes(M, -1, -2)))
    return CovarianceField.from_matrices(M, check=False)


def relative_discrepancy(A: CovarianceField, B: CovarianceField):
    """Max over pixels of ||A_l - B_l||_F / ||B_l||_F."""
    Ma, Mb = A.matrices(), B.matrices()
    num = np.linalg.norm(Ma - Mb, axis=(-2, -1))
    den = np.linalg.norm(Mb, axis=(-2, -1))
    return float(np.max(num / np.maximum(den, np.finfo(float).tiny)))


def check_linear_equivalence(img, dirs: ProjectionDirectionSet, weights, mode="hermitian",
                            despeckler=None, tol=1e-10):
    """Direct multi-channel linear filtering vs projection-wise filtering.

    ``despeckler`` overrides the projection-side filter (used for the
    negative control with data-dependent weights).
    """
    direct = direct_linear_estimate(img, weights)
    op = build_operator(dirs, mode)
    mucha = run_muchapro(img, dirs, despeckler or Linear(weights), op=op)
    d = relative_discrepancy(mucha, direct)
    return ValidationEntry("linear_equivalence", d, tol, d < tol, img.height * img.width,
                           "max_l ||C_mucha - C_direct||_F / ||C_direct||_F")


check_prop1_equivalence = check_linear_equivalence


def _pearson(a, b):
    a = a - a.mean()
    b = b - b.mean()
    den = np.sqrt(np.sum(a * a) * np.sum(b * b))
    if den == 0:
        return np.nan
    return float(np.sum(a * b) / den)


def check_reim_independence(s, k_sigma=4.0):
    """Pearson correlation of Re(s) with Im(s) at lags (0,0), (0,1), (1,0).

    Each passes iff |r| < k_sigma / sqrt(N). A constant real or imaginary part
    makes r undefined; the entry is then reported with ``passed=None``.
    """
    s = np.asarray(s)
    if s.ndim != 2:
        raise MuchaproError("expected a single-channel 2-D image")
    N = s.size
    thr = k_sigma / np.sqrt(N)
    re, im = s.real, s.imag
    report = ValidationReport()
    for name, a, b in (("reim_corr_lag00", re, im),
                       ("reim_corr_lag01", re[:, :-1], im[:, 1:]),
                       ("reim_corr_lag10", re[:-1, :], im[1:, :])):
        r = _pearson(a, b)
        if np.isnan(r):
            report.add(ValidationEntry(name, np.nan, thr, None, a.size, "|pearson(Re, Im)|",
                                       "constant component, correlation undefined"))
        else:
            report.add(ValidationEntry(name, abs(r), thr, abs(r) < thr, a.size,
                                       f"|pearson(Re, Im shifted)| < {k_sigma:g}/sqrt(N)"))
    return report


def spectrum_asymmetry(s, smooth=None):
    """sum |P - P_reflected| / sum (P + P_reflected) on a smoothed periodogram.

    P is |FFT(s)|^2 smoothed with a circular Gaussian of ``smooth`` bins
    (default min(H, W) / 32) to tame periodogram noise.
    """
    s = np.asarray(s)
    P = np.abs(np.fft.fft2(s)) ** 2
    if smooth is None:
        smooth = max(1.0, min(s.shape) / 32)
    P = ndimage.gaussian_filter(P, smooth, mode="wrap")
    # point reflection about DC: index k -> -k mod n
    R = np.roll(P[::-1, ::-1], shift=(1, 1), axis=(0, 1))
    total = np.sum(P + R)
    return float(np.sum(np.abs(P - R)) / total) if total > 0 else 0.0


def check_spectrum_symmetry(s, threshold=SYMMETRY_THRESHOLD, smooth=None):
    a = spectrum_asymmetry(s, smooth)
    return ValidationEntry("spectrum_symmetry", a, threshold, a < threshold, np.asarray(s).size,
                           "sum|P(f) - P(-f)| / sum(P(f) + P(-f)), smoothed periodogram",
                           "advisory")


def phase_coherence_error(estimated: CovarianceField, truth: CovarianceField, i=0, j=1):
    """(wrap-aware phase RMSE, coherence MAE) between two fields."""
    if estimated.shape != truth.shape or estimated.D != truth.D:
        raise MuchaproError("fields differ in shape or channel count")

    def parts(C):
        cij = C.entry(i, j)
        den = np.sqrt(np.maximum(C.diagonal(i), 0) * np.maximum(C.diagonal(j), 0))
        coh = np.where(den > 0, np.abs(cij) / np.where(den > 0, den, 1), 0.0)
        return cij, coh

    ce, ge = parts(estimated)
    ct, gt = parts(truth)
    dphi = np.angle(ce * np.conj(ct))
    return float(np.sqrt(np.mean(dphi ** 2))), float(np.mean(np.abs(ge - gt)))


def validate_image(img: MultiChannelSLCImage, dirs: ProjectionDirectionSet | None = None):
    """Re/Im and spectral checks on each channel, or each projection if ``dirs``."""
    from .projection import project

    report = ValidationReport()
    stack = project(img, dirs) if dirs is not None else img.values
    label = "projection" if dirs is not None else "channel"
    for k, s in enumerate(stack):
        for e in check_reim_independence(s).entries + [check_spectrum_symmetry(s)]:
            e.name = f"{label}{k}.{e.name}"
            report.add(e)
    return report
