import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from muchapro.core import CovarianceField, MuchaproError, MultiChannelSLCImage, quadratic_form
from muchapro.despecklers import Identity, Linear, LinearWeights, LogGaussian
from muchapro.directions import shipped_directions
from muchapro.pdenforce import PDEnforceParams
from muchapro.projection import (
    PipelineError,
    ProjectionDirectionSet,
    RankDeficientError,
    RunOptions,
    build_operator,
    invert_projections,
    project,
    raw_matrices,
    run_muchapro,
)
from muchapro.speckle import PhantomSpec, make_phantom, sample_goodman
from muchapro.validation import direct_linear_estimate, phase_coherence_error, relative_discrepancy

from conftest import random_hermitian


def random_dirs(rng, D, K):
    return ProjectionDirectionSet(rng.standard_normal((D, K)) + 1j * rng.standard_normal((D, K)))


def random_psd_field(rng, D, H, W):
    X = rng.standard_normal((H, W, D, D)) + 1j * rng.standard_normal((H, W, D, D))
    return CovarianceField.from_matrices(X @ np.conj(np.swapaxes(X, -1, -2)))


def test_project_basis_and_linearity(rng):
    img = MultiChannelSLCImage(rng.standard_normal((3, 4, 5)) + 1j * rng.standard_normal((3, 4, 5)))
    S = project(img, ProjectionDirectionSet(np.eye(3)))
    assert np.array_equal(S, img.values)
    p = np.array([1, 2j, -1])
    s1 = project(img, ProjectionDirectionSet(p))[0]
    s2 = project(img, ProjectionDirectionSet(2.5 * p))[0]
    assert np.allclose(s2, 2.5 * s1)
    with pytest.raises(MuchaproError):
        project(img, ProjectionDirectionSet(np.eye(2)))


def test_projection_variance_matches_quadratic_form():
    c = 0.7 * np.exp(1j) * np.sqrt(2)
    C = np.array([[2, c], [np.conj(c), 1]])
    img = sample_goodman(CovarianceField.constant(C, 250, 400), seed=21)
    p = np.array([0.6, 0.3 - 0.8j])
    s = project(img, ProjectionDirectionSet(p))[0]
    assert np.mean(np.abs(s) ** 2) == pytest.approx(quadratic_form(C, p), rel=0.02)


def test_operator_d1():
    op = build_operator(ProjectionDirectionSet(np.array([[1.0]])))
    assert op.Q.tolist() == [[1.0]]
    assert op.condition == 1.0


def test_shipped_d2_condition():
    op = build_operator(shipped_directions(2, "hermitian"))
    assert op.condition == pytest.approx(2.0, rel=0.01)


@pytest.mark.parametrize("mode", ["hermitian", "unconstrained"])
@pytest.mark.parametrize("D", [1, 2, 3, 4])
def test_operator_consistency(rng, mode, D):
    dirs = random_dirs(rng, D, D * D + 2)
    op = build_operator(dirs, mode)
    for _ in range(5):
        C = random_hermitian(rng, D)
        v = op.forward(CovarianceField.from_matrices(C[None, None]))[:, 0, 0]
        want = np.array([quadratic_form(C, dirs.direction(k)) for k in range(dirs.K)])
        assert np.all(np.abs(v - want) < 1e-12 * np.abs(want) + 1e-12 * np.abs(C).max() + 1e-15)


def test_rank_deficient_rejected(rng):
    with pytest.raises(RankDeficientError, match="D\\^2=4"):
        build_operator(random_dirs(rng, 2, 3))
    P = np.tile(rng.standard_normal((2, 1)) + 0j, (1, 4))
    with pytest.raises(RankDeficientError, match="degenerate"):
        build_operator(ProjectionDirectionSet(P))


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 4), st.sampled_from(["hermitian", "unconstrained"]), st.integers(0, 2**32 - 1))
def test_exact_recovery(D, mode, seed):
    rng = np.random.default_rng(seed)
    dirs = shipped_directions(D, mode)
    truth = random_psd_field(rng, D, 3, 4)
    op = build_operator(dirs, mode)
    est = invert_projections(op, op.forward(truth))
    err = np.linalg.norm(est.matrices() - truth.matrices(), axis=(-2, -1)) / np.linalg.norm(truth.matrices(), axis=(-2, -1))
    assert err.max() < 1e-10


def test_overdetermined_consistent(rng):
    dirs = random_dirs(rng, 3, 20)
    truth = random_psd_field(rng, 3, 4, 4)
    op = build_operator(dirs)
    est = invert_projections(op, op.forward(truth), residuals=True)
    assert np.allclose(est.values, truth.values, rtol=1e-10, atol=1e-10)
    assert est.meta["residuals"].max() < 1e-10 * np.abs(truth.values).max()


def test_perturbation_bounded_by_condition(rng):
    dirs = random_dirs(rng, 2, 4)
    op = build_operator(dirs)
    truth = random_psd_field(rng, 2, 1, 1)
    v = op.forward(truth)
    c_true = truth.values[:, 0, 0]
    sv = np.linalg.svd(op.Q, compute_uv=False)
    for eps in (1e-8, 1e-6, 1e-4):
        dv = eps * rng.standard_normal(v.shape)
        dc = invert_projections(op, v + dv).values[:, 0, 0] - c_true
        # ||dc|| <= ||dv|| / sigma_min(Q)
        assert np.linalg.norm(dc) <= np.linalg.norm(dv) / sv[-1] * (1 + 1e-9)
        assert np.linalg.norm(dc) > 0


def test_nan_variance_named(rng):
    op = build_operator(shipped_directions(2))
    V = np.ones((4, 3, 3))
    V[2, 1, 0] = np.nan
    with pytest.raises(MuchaproError, match=r"image 2 at pixel \(row=1, col=0\)"):
        invert_projections(op, V)


def test_modes_agree_on_noisy_data(rng):
    # conj-transposing an unconstrained minimizer keeps the residual for real
    # data, so the unique solution is Hermitian and both modes coincide
    dirs = random_dirs(rng, 2, 7)
    truth = random_psd_field(rng, 2, 5, 5)
    noisy = build_operator(dirs).forward(truth) * (1 + 0.1 * rng.standard_normal((7, 5, 5)))
    unc = invert_projections(build_operator(dirs, "unconstrained"), noisy)
    her = invert_projections(build_operator(dirs, "hermitian"), noisy)
    assert unc.meta["asymmetry"].max() < 1e-12
    assert np.allclose(unc.values, her.values, rtol=1e-10, atol=1e-12)
    raw_h = raw_matrices(build_operator(dirs, "hermitian"), noisy)
    assert np.array_equal(raw_h, np.conj(np.swapaxes(raw_h, -1, -2)))
    assert build_operator(dirs, "unconstrained").condition > build_operator(dirs, "hermitian").condition


def test_run_oracle_despeckler_closes_loop(rng, dirs2):
    truth = random_psd_field(rng, 2, 6, 7)
    op = build_operator(dirs2)
    V = op.forward(truth)
    img = sample_goodman(truth, seed=0)
    lookup = {k: V[k] for k in range(4)}
    calls = iter(range(4))

    def oracle(s):
        return lookup[next(calls)]

    est = run_muchapro(img, dirs2, oracle)
    assert np.allclose(est.values, truth.values, rtol=1e-10, atol=1e-10 * np.abs(truth.values).max())


def test_run_boxcar_equals_direct_multilook(dirs2):
    img = sample_goodman(make_phantom(PhantomSpec("fringes", 40, 50, coherence=0.8)), seed=2)
    w = LinearWeights.boxcar(5)
    est = run_muchapro(img, dirs2, Linear(w))
    assert relative_discrepancy(est, direct_linear_estimate(img, w)) < 1e-10


def test_run_gaussian_beats_single_look(dirs2):
    truth = make_phantom(PhantomSpec("fringes", 128, 128, frequency=(1 / 64, 0), coherence=(0.5, 0.9)))
    img = sample_goodman(truth, seed=8)
    one = phase_coherence_error(run_muchapro(img, dirs2, Identity()), truth)[0]
    smooth = phase_coherence_error(run_muchapro(img, dirs2, Linear(LinearWeights.gaussian(1.5))), truth)[0]
    assert smooth < one


def test_run_options(dirs2):
    truth = make_phantom(PhantomSpec("fringes", 32, 32, coherence=0.95))
    img = sample_goodman(truth, seed=3)
    est = run_muchapro(img, dirs2, LogGaussian(1.0),
                       RunOptions(pd_params=PDEnforceParams(1e-3, 0.9), substitute_reflectivity=True, jobs=2))
    lg = LogGaussian(1.0)
    assert np.allclose(est.diagonal(0), np.maximum(lg(img.values[0]), 1e-3))
    assert np.all(np.abs(est.entry(0, 1)) <= 0.9 * (1 + 1e-12) * np.sqrt(est.diagonal(0) * est.diagonal(1)))
    auto = run_muchapro(img, dirs2, Identity(), RunOptions(pd_params="auto"))
    assert auto.meta["pd_params"].rho_max == 0.99


def test_run_clips_negative_values(dirs2):
    img = sample_goodman(CovarianceField.constant(np.eye(2), 8, 8), seed=0)
    est = run_muchapro(img, dirs2, lambda s: np.abs(s) ** 2 - 0.5)
    assert est.meta["n_clipped"] > 0


def test_run_errors_annotated(dirs2):
    img = MultiChannelSLCImage(np.ones((3, 4, 4)))
    with pytest.raises(PipelineError, match=r"\[project\]"):
        run_muchapro(img, dirs2, Identity())
    img = MultiChannelSLCImage(np.ones((2, 4, 4)))
    with pytest.raises(PipelineError, match=r"\[despeckle\]"):
        run_muchapro(img, dirs2, lambda s: np.ones((2, 2)))
