"""Choosing projection directions with a well-conditioned Q Q^H.

The exact condition number is non-smooth in the directions. It is replaced
by a log-sum-exp surrogate that tends to lambda_max / lambda_min as the
smoothing parameter mu goes to 0, minimized with L-BFGS over an annealed
sequence of mu values from many random starts.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp, softmax

from .core import MuchaproError
from .projection import MODES, ProjectionDirectionSet, build_q, gram_eigenvalues

log = logging.getLogger(__name__)

SINGULAR_RTOL = 1e-13


def condition_number(dirs, mode="hermitian"):
    """lambda_max / lambda_min of Q Q^H; ``inf`` when singular."""
    P = dirs.P if isinstance(dirs, ProjectionDirectionSet) else np.asarray(dirs)
    w = gram_eigenvalues(build_q(P, mode, im_sign=1.0))
    lmax = w[..., -1]
    lmin = w[..., 0]
    singular = lmin <= SINGULAR_RTOL * lmax
    cond = np.where(singular, np.inf, lmax / np.where(singular, 1.0, lmin))
    return float(cond) if np.ndim(cond) == 0 else cond


def smoothed_condition(eigenvalues, mu, mean_exp=False):
    """-log(sum exp(l/mu)) / log(sum exp(-l/mu)).

    With ``mean_exp`` the sums become means (log n subtracted from both
    logs). That variant is >= 1 for every mu and positive spectrum, which
    the plain form is not once mu exceeds lambda_min / log n.
    """
    if not mu > 0:
        raise MuchaproError(f"mu must be > 0, got {mu}")
    lam = np.asarray(eigenvalues, dtype=np.float64)
    shift = np.log(lam.shape[-1]) if mean_exp else 0.0
    num = logsumexp(lam / mu, axis=-1) - shift
    den = logsumexp(-lam / mu, axis=-1) - shift
    return -num / den


def smoothed_condition_grad(eigenvalues, mu, mean_exp=False):
    """Gradient of :func:`smoothed_condition` with respect to the eigenvalues."""
    lam = np.asarray(eigenvalues, dtype=np.float64)
    shift = np.log(lam.shape[-1]) if mean_exp else 0.0
    num = logsumexp(lam / mu) - shift
    den = logsumexp(-lam / mu) - shift
    dnum = softmax(lam / mu) / mu
    dden = -softmax(-lam / mu) / mu
    return -(dnum * den - num * dden) / den ** 2


def _unpack(x, D, K):
    n = D * K
    return (x[:n] + 1j * x[n:]).reshape(D, K)


def _pack(P):
    return np.concatenate([P.real.ravel(), P.imag.ravel()])


def surrogate(x, D, K, mode, mu):
    """Smoothed condition number of the mean-normalized Gram spectrum and its gradient."""
    P = _unpack(x, D, K)
    Q = build_q(P, mode, im_sign=1.0)
    A = Q @ np.conj(Q).T
    lam, U = np.linalg.eigh(A)
    m = lam.mean()
    lt = lam / m
    f = smoothed_condition(lt, mu, mean_exp=True)
    gt = smoothed_condition_grad(lt, mu, mean_exp=True)
    # chain through the mean normalization
    g_lam = gt / m - np.dot(gt, lam) / (len(lam) * m * m)
    # symmetric spectral function: dF/dA = U diag(g) U^H, valid at crossings too
    G = (U * g_lam) @ np.conj(U).T
    R = G @ Q  # df = 2 Re tr(R^H dQ)
    if mode == "hermitian":
        from .core import devectorize_hermitian

        # g^T q_k = p_k^H M p_k with M = devectorize(g)
        Ms = devectorize_hermitian(2 * R.real.T)  # (K, D, D)
        w = 2 * np.einsum("kij,jk->ik", Ms, P)
    else:
        Rm = R.T.reshape(K, D, D)
        S = Rm + np.conj(np.swapaxes(Rm, -1, -2))
        w = 2 * np.einsum("kij,jk->ik", S, P)
    return f, _pack(w)


def fd_gradient(fun, x, h=1e-6):
    """Central finite differences, the verification path for :func:`surrogate`."""
    g = np.empty_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


@dataclass
class SmoothedConditionParams:
    schedule: tuple = (1.0, 0.3, 0.1, 0.03, 0.01)
    restarts: int = 100
    seed: int = 0
    memory: int = 10
    gtol: float = 1e-8
    maxiter: int = 500

    def __post_init__(self):
        s = np.asarray(self.schedule, dtype=float)
        if s.size == 0 or np.any(s <= 0):
            raise MuchaproError("mu schedule must be positive")
        if np.any(np.diff(s) >= 0):
            raise MuchaproError("mu schedule must be strictly decreasing")
        if self.restarts < 1:
            raise MuchaproError("need at least one restart")


@dataclass
class OptimizationResult:
    dirs: ProjectionDirectionSet
    condition: float
    initial_condition: float
    restart: int
    history: list = field(default_factory=list)


def random_directions(D, K, rng):
    """Standard complex Gaussian entries, each direction scaled to unit norm."""
    P = rng.standard_normal((D, K)) + 1j * rng.standard_normal((D, K))
    return P / np.linalg.norm(P, axis=0)


def _canonical(P):
    """Common scale and per-direction phase fixed; the condition number is unchanged."""
    P = P / np.sqrt(np.mean(np.sum(np.abs(P) ** 2, axis=0)))
    return P * np.exp(-1j * np.angle(P[0]))


def optimize_one(P0, mode, params):
    D, K = P0.shape
    x = _pack(P0)
    for mu in params.schedule:
        res = minimize(surrogate, x, args=(D, K, mode, mu), jac=True, method="L-BFGS-B",
                       options={"maxcor": params.memory, "gtol": params.gtol,
                                "maxiter": params.maxiter})
        if np.all(np.isfinite(res.x)):
            x = res.x
    return _unpack(x, D, K)


def optimize_directions(D, K, mode="hermitian", params: SmoothedConditionParams | None = None):
    """Best direction set over ``params.restarts`` annealed L-BFGS runs."""
    params = params or SmoothedConditionParams()
    if mode not in MODES:
        raise MuchaproError(f"unknown mode {mode!r}")
    if K < D * D:
        raise MuchaproError(f"K={K} < D^2={D * D}: Q Q^H cannot be invertible")
    rng = np.random.default_rng(params.seed)
    best, history = None, []
    for r in range(params.restarts):
        P0 = random_directions(D, K, rng)
        c0 = condition_number(P0, mode)
        try:
            P = optimize_one(P0, mode, params)
            c = condition_number(P, mode)
        except (np.linalg.LinAlgError, FloatingPointError):
            P, c = P0, np.inf
        if not np.isfinite(c) or c > c0:
            # never worse than where this restart began
            P, c = P0, c0
        if best is None or c < best.condition:
            best = OptimizationResult(None, c, c0, r, history)
            best_P = P
        history.append(c)
    if not np.isfinite(best.condition):
        raise MuchaproError(f"all {params.restarts} restarts diverged")
    P = _canonical(best_P)
    best.dirs = ProjectionDirectionSet(P, meta={"mode": mode, "seed": params.seed,
                                               "condition": condition_number(P, mode)})
    best.condition = best.dirs.meta["condition"]
    return best


@dataclass
class RandomStudy:
    D: int
    K: int
    mode: str
    conditions: np.ndarray

    @property
    def minimum(self):
        return float(np.min(self.conditions))

    @property
    def median(self):
        return float(np.median(self.conditions))

    def histogram(self, bins=50):
        finite = self.conditions[np.isfinite(self.conditions)]
        return np.histogram(np.log10(finite), bins=bins)

    def summary(self):
        return {"D": self.D, "K": self.K, "mode": self.mode, "trials": len(self.conditions),
                "min": self.minimum, "median": self.median}


def random_draws(D, K, trials, seed):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((trials, D, K)) + 1j * rng.standard_normal((trials, D, K))


def random_direction_study(D, K, mode="hermitian", trials=10_000, seed=0, draws=None):
    """Condition numbers of Q Q^H for i.i.d. standard complex Gaussian directions."""
    if trials < 1:
        raise MuchaproError("trials must be >= 1")
    P = random_draws(D, K, trials, seed) if draws is None else draws
    conds = np.concatenate([condition_number(P[i:i + 4096], mode)
                            for i in range(0, len(P), 4096)])
    return RandomStudy(D, K, mode, conds)


def shipped_directions(D, mode="hermitian"):
    """Optimized K = D^2 direction sets bundled with the package."""
    from .io import parse_directions

    if D == 1:
        return ProjectionDirectionSet(np.ones((1, 1)), meta={"mode": mode, "condition": 1.0})
    name = f"d{D}k{D * D}_{mode}.dirs"
    try:
        text = resources.files("muchapro").joinpath("data", name).read_text()
    except FileNotFoundError as exc:
        raise MuchaproError(f"no shipped directions for D={D}, mode={mode}") from exc
    return parse_directions(text)
