"""Projection onto complex directions and least-squares covariance recovery."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .core import (
    CovarianceField,
    InvariantError,
    MuchaproError,
    MultiChannelSLCImage,
    devectorize_hermitian,
    hermitian_asymmetry,
    upper_pairs,
    vectorize_hermitian,
)

log = logging.getLogger(__name__)

MODES = ("hermitian", "unconstrained")
RANK_RTOL = 1e-10


class RankDeficientError(MuchaproError):
    pass


class PipelineError(MuchaproError):
    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class ProjectionDirectionSet:
    """K complex directions p_k in C^D, stored as the columns of ``P``."""

    P: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        P = np.asarray(self.P, dtype=np.complex128)
        if P.ndim == 1:
            P = P[:, None]
        if P.ndim != 2 or P.shape[0] < 1 or P.shape[1] < 1:
            raise MuchaproError(f"directions must be a (D, K) array, got shape {P.shape}")
        if not np.all(np.isfinite(P)):
            raise MuchaproError("directions contain non-finite values")
        norms = np.linalg.norm(P, axis=0)
        if np.any(norms == 0):
            raise MuchaproError(f"direction {int(np.argmin(norms))} has zero norm")
        P.flags.writeable = False
        object.__setattr__(self, "P", P)

    @property
    def D(self):
        return self.P.shape[0]

    @property
    def K(self):
        return self.P.shape[1]

    def direction(self, k):
        return self.P[:, k]


def _check_mode(mode):
    if mode not in MODES:
        raise MuchaproError(f"mode must be one of {MODES}, got {mode!r}")


def build_q(P, mode="hermitian", im_sign=-1.0):
    """Columns q_k for directions ``P`` of shape ``(..., D, K)``.

    hermitian: real ``(..., D*D, K)`` with blocks |p_d|^2, 2 Re(u), im_sign*2 Im(u)
    where u holds the upper-triangle entries of p p^H.
    unconstrained: complex ``(..., D*D, K)`` with q_k = vec(p_k p_k^H), row-major.
    """
    P = np.asarray(P, dtype=np.complex128)
    D = P.shape[-2]
    outer = P[..., :, None, :] * np.conj(P[..., None, :, :])  # (..., D, D, K)
    if mode == "unconstrained":
        return outer.reshape(P.shape[:-2] + (D * D, P.shape[-1]))
    pairs = upper_pairs(D)
    r = [i for i, _ in pairs]
    c = [j for _, j in pairs]
    idx = np.arange(D)
    diag = outer[..., idx, idx, :].real
    u = outer[..., r, c, :]
    return np.concatenate([diag, 2 * u.real, im_sign * 2 * u.imag], axis=-2)


def gram_eigenvalues(Q):
    Q = np.asarray(Q)
    A = Q @ np.conj(np.swapaxes(Q, -1, -2))
    return np.linalg.eigvalsh(A)


def _identity_error(Q, P, mode, rng):
    D = P.shape[0]
    X = rng.standard_normal((3, D, D)) + 1j * rng.standard_normal((3, D, D))
    C = X + np.conj(np.swapaxes(X, -1, -2))
    want = np.einsum("ik,nij,jk->nk", np.conj(P), C, P).real
    if mode == "hermitian":
        got = vectorize_hermitian(C) @ Q
    else:
        got = (C.reshape(3, D * D) @ np.conj(Q)).real
    return np.max(np.abs(got - want) / (np.abs(want) + np.abs(C).max() * 1e-3))


@dataclass(frozen=True)
class ProjectionOperator:
    dirs: ProjectionDirectionSet
    mode: str
    Q: np.ndarray
    solver: np.ndarray  # (D*D, K): least-squares pseudo-inverse of Q^H
    condition: float
    im_sign: float

    @property
    def D(self):
        return self.dirs.D

    @property
    def K(self):
        return self.dirs.K

    def forward(self, C: CovarianceField):
        """Noise-free projection variances p_k^H C_l p_k, shape ``(K, H, W)``."""
        if C.D != self.D:
            raise MuchaproError(f"field has D={C.D}, operator D={self.D}")
        if self.mode == "hermitian":
            v = np.tensordot(self.Q.T, C.values, axes=1)
        else:
            c = np.moveaxis(C.matrices().reshape(C.shape + (self.D * self.D,)), -1, 0)
            v = np.tensordot(np.conj(self.Q).T, c, axes=1).real
        return v

    def solve(self, variances):
        """Raw least-squares unknowns, shape ``(D*D, H, W)`` (complex if unconstrained)."""
        V = np.asarray(variances, dtype=np.float64)
        return np.tensordot(self.solver, V, axes=1)

    def residuals(self, variances):
        """Per-pixel least-squares residual norm ||Q^H c - v||."""
        V = np.asarray(variances, dtype=np.float64)
        c = self.solve(V)
        fit = np.tensordot(np.conj(self.Q).T, c, axes=1)
        return np.sqrt(np.sum(np.abs(fit - V) ** 2, axis=0))


def build_operator(dirs: ProjectionDirectionSet, mode="hermitian") -> ProjectionOperator:
    _check_mode(mode)
    D, K = dirs.D, dirs.K
    n = D * D
    if K < n:
        raise RankDeficientError(
            f"K={K} directions cannot determine D^2={n} unknowns: need at least D^2 "
            "linearly independent projection directions")
    rng = np.random.default_rng(0)
    im_sign = -1.0
    Q = build_q(dirs.P, mode, im_sign)
    if _identity_error(Q, dirs.P, mode, rng) > 1e-10:
        im_sign = 1.0
        Q = build_q(dirs.P, mode, im_sign)
        if _identity_error(Q, dirs.P, mode, rng) > 1e-10:
            raise InvariantError("projection operator fails the quadratic-form identity")
    w = gram_eigenvalues(Q)
    if w[0] <= RANK_RTOL * w[-1]:
        raise RankDeficientError(
            f"Q Q^H is singular (eigenvalue ratio {w[0] / w[-1]:.2e}): the {K} directions "
            f"are degenerate and do not span the D^2={n} unknowns")
    # one orthogonal decomposition of Q^H serves every pixel
    O, R = scipy.linalg.qr(np.conj(Q).T, mode="economic")
    solver = scipy.linalg.solve_triangular(R, np.conj(O).T)
    if mode == "hermitian":
        solver = solver.real
    solver.flags.writeable = False
    return ProjectionOperator(dirs, mode, Q, solver, float(w[-1] / w[0]), im_sign)


def project(img: MultiChannelSLCImage, dirs: ProjectionDirectionSet) -> np.ndarray:
    """[s_k]_l = p_k^H z_l; returns a complex ``(K, H, W)`` stack."""
    if dirs.D != img.D:
        raise MuchaproError(f"directions have D={dirs.D} but image has D={img.D}")
    return np.tensordot(np.conj(dirs.P).T, img.values, axes=1)


def _check_variances(variances, K):
    V = np.asarray(variances, dtype=np.float64)
    if V.ndim != 3 or V.shape[0] != K:
        raise MuchaproError(f"expected {K} reflectivity images, got array of shape {V.shape}")
    nan = ~np.isfinite(V)
    if nan.any():
        k, row, col = np.argwhere(nan)[0]
        raise MuchaproError(f"non-finite value in reflectivity image {k} at pixel (row={row}, col={col})")
    return V


def invert_projections(op: ProjectionOperator, variances, residuals=False) -> CovarianceField:
    """Per-pixel least squares c_l = (Q Q^H)^-1 Q v_l.

    In unconstrained mode the solution is not exactly Hermitian; the field keeps
    its Hermitian part and ``meta["asymmetry"]`` records the relative
    asymmetry per pixel.
    """
    V = _check_variances(variances, op.K)
    c = op.solve(V)
    meta = {}
    if op.mode == "hermitian":
        field_values = c
    else:
        D = op.D
        M = np.moveaxis(c, 0, -1).reshape(V.shape[1:] + (D, D))
        meta["asymmetry"] = hermitian_asymmetry(M)
        herm = 0.5 * (M + np.conj(np.swapaxes(M, -1, -2)))
        field_values = np.moveaxis(vectorize_hermitian(herm, check=False), -1, 0)
    if residuals:
        meta["residuals"] = op.residuals(V)
    return CovarianceField(field_values, meta=meta)


def raw_matrices(op: ProjectionOperator, variances):
    """Unsymmetrized per-pixel matrices ``(H, W, D, D)`` from the raw solution."""
    V = _check_variances(variances, op.K)
    c = np.moveaxis(op.solve(V), 0, -1)
    if op.mode == "hermitian":
        return devectorize_hermitian(c)
    return c.reshape(V.shape[1:] + (op.D, op.D))


@dataclass
class RunOptions:
    mode: str = "hermitian"
    pd_params: object = None  # PDEnforceParams, "auto" or None
    substitute_reflectivity: bool = False
    jobs: int = 1


def despeckle_stack(stack, despeckler, jobs=1):
    """Apply ``despeckler`` to each image of a ``(K, H, W)`` complex stack."""
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            out = list(ex.map(despeckler, list(stack)))
    else:
        out = [despeckler(s) for s in stack]
    V = np.stack([np.asarray(o, dtype=np.float64) for o in out])
    if V.shape != stack.shape:
        raise MuchaproError(f"despeckler returned shape {V.shape[1:]}, expected {stack.shape[1:]}")
    return V


def run_muchapro(img: MultiChannelSLCImage, dirs: ProjectionDirectionSet, despeckler,
                 options: RunOptions | None = None, op: ProjectionOperator | None = None) -> CovarianceField:
    """Project, despeckle each projection independently, then invert."""
    from .pdenforce import PDEnforceParams, enforce_pd_field

    opts = options or RunOptions()
    try:
        op = op or build_operator(dirs, opts.mode)
    except MuchaproError as exc:
        raise PipelineError("build-operator", exc) from exc
    try:
        S = project(img, dirs)
    except MuchaproError as exc:
        raise PipelineError("project", exc) from exc
    try:
        V = despeckle_stack(S, despeckler, opts.jobs)
    except MuchaproError as exc:
        raise PipelineError("despeckle", exc) from exc
    n_clipped = int(np.count_nonzero(V < 0))
    if n_clipped:
        log.info("clipped %d negative despeckled values to 0", n_clipped)
        V = np.maximum(V, 0.0)
    try:
        est = invert_projections(op, V)
    except MuchaproError as exc:
        raise PipelineError("invert", exc) from exc
    meta = dict(est.meta, n_clipped=n_clipped, condition=op.condition)
    values = np.array(est.values)
    if opts.substitute_reflectivity:
        try:
            R = despeckle_stack(img.values, despeckler, opts.jobs)
        except MuchaproError as exc:
            raise PipelineError("substitute-reflectivity", exc) from exc
        values[:img.D] = np.maximum(R, 0.0)
    est = CovarianceField(values, meta=meta)
    if opts.pd_params is not None:
        params = opts.pd_params
        if isinstance(params, str):
            params = PDEnforceParams.for_field(est)
        est = enforce_pd_field(est, params)
        est.meta.update(meta)
    return est
