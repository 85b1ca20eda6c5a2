import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from muchapro.core import CovarianceField, MuchaproError
from muchapro.despecklers import (
    External,
    Identity,
    IntensityAdaptive,
    Linear,
    LinearWeights,
    LogGaussian,
    despeckle_external,
    despeckle_identity,
    despeckle_linear,
    despeckle_log_gaussian,
    parse_despeckler,
)
from muchapro.speckle import PhantomSpec, make_phantom, sample_goodman

SCRIPTS = Path(__file__).resolve().parents[1] / "scripts"


def speckle(h, w, v=1.0, seed=0):
    return sample_goodman(CovarianceField.constant(np.array([[v]]), h, w), seed=seed).values[0]


def test_identity_examples():
    assert np.array_equal(despeckle_identity(np.ones((3, 4), complex)), np.ones((3, 4)))
    assert despeckle_identity(np.full((1, 1), 3j))[0, 0] == 9
    assert despeckle_identity(speckle(300, 300, v=2.5)).mean() == pytest.approx(2.5, rel=0.02)


def test_rejects_non_2d():
    with pytest.raises(MuchaproError):
        Identity()(np.ones((2, 2, 2)))


def test_delta_kernel_is_identity(rng):
    s = rng.standard_normal((9, 11)) + 1j * rng.standard_normal((9, 11))
    assert np.array_equal(despeckle_linear(s, LinearWeights(kernel=[[1.0]])), despeckle_identity(s))


def test_boxcar_variance_reduction():
    s = speckle(512, 512, seed=3)
    one = despeckle_identity(s)
    box = despeckle_linear(s, LinearWeights.boxcar(5))
    ratio = one.var() / box.var()
    assert 22 < ratio < 28
    assert box.mean() == pytest.approx(one.mean(), rel=1e-3)


def test_weight_validation():
    with pytest.raises(MuchaproError):
        LinearWeights(kernel=np.zeros((3, 3)))
    with pytest.raises(MuchaproError):
        LinearWeights(kernel=[[1, -1, 1]])
    with pytest.raises(MuchaproError):
        LinearWeights()
    with pytest.raises(MuchaproError):
        LogGaussian(0)


def test_linear_weights_are_data_independent(rng):
    w = LinearWeights.gaussian(1.2)
    k = w.kernel.copy()
    w.apply(rng.standard_normal((20, 20)) * 1e6)
    assert np.array_equal(w.kernel, k)
    assert w.kernel.sum() == pytest.approx(1, abs=1e-15)


def test_global_mean_and_matrix_weights(rng):
    x = rng.random((6, 7))
    assert np.allclose(LinearWeights(global_mean=True).apply(x), x.mean())
    g = LinearWeights.guided(rng.random((6, 7)))
    y = g.apply(x)
    assert y.shape == x.shape and np.all((y >= x.min() - 1e-12) & (y <= x.max() + 1e-12))
    with pytest.raises(MuchaproError):
        g.apply(rng.random((5, 5)))


def test_log_gaussian_large_sigma_unbiased():
    s = speckle(512, 512, v=3.0, seed=4)
    out = despeckle_log_gaussian(s, 40.0)
    assert np.median(out) == pytest.approx(3.0, rel=0.03)


def test_log_gaussian_small_sigma_overshoots():
    s = speckle(64, 64, seed=5)
    out = despeckle_log_gaussian(s, 1e-3)
    assert np.allclose(out, np.abs(s) ** 2 * np.exp(np.euler_gamma), rtol=1e-6)


def test_log_gaussian_zero_image_warns(caplog):
    out = LogGaussian(1.0)(np.zeros((4, 4), complex))
    assert np.all(out == 0) and "all-zero" in caplog.text


@settings(max_examples=25, deadline=None)
@given(st.floats(0.01, 100), st.integers(0, 1000))
def test_scaling_equivariance(alpha, seed):
    s = speckle(24, 24, seed=seed)
    for f, tol in ((Identity(), 1e-13), (Linear(LinearWeights.boxcar(3)), 1e-13), (LogGaussian(1.5), 1e-8)):
        assert np.allclose(f(alpha * s), alpha ** 2 * f(s), rtol=tol, atol=0)


def edge_width(profile):
    lo, hi = profile.min(), profile.max()
    p = (profile - lo) / (hi - lo)
    return np.count_nonzero((p > 0.1) & (p < 0.9))


def test_log_gaussian_edge_sharper_than_matched_boxcar():
    truth = make_phantom(PhantomSpec("mosaic", 256, 256, D=1, matrices=[[[1.0]], [[10.0]]], grid=(1, 2)))
    outs = {}
    flat_box, flat_lg = [], []
    for seed in range(4):
        s = sample_goodman(truth, seed=seed).values[0]
        outs.setdefault("lg", []).append(despeckle_log_gaussian(s, 2.0))
        flat = speckle(256, 256, seed=100 + seed)
        flat_lg.append(despeckle_log_gaussian(flat, 2.0)[20:-20, 20:-20].var())
        flat_box.append(despeckle_linear(flat, LinearWeights.boxcar(7))[20:-20, 20:-20].var())
        outs.setdefault("box", []).append(despeckle_linear(s, LinearWeights.boxcar(7)))
    # the boxcar smooths at least as much as the log-Gaussian on flat areas
    assert np.mean(flat_box) <= 1.2 * np.mean(flat_lg)
    prof = {k: np.mean([o.mean(axis=0) for o in v], axis=0) for k, v in outs.items()}
    assert edge_width(prof["lg"]) <= edge_width(prof["box"])


def test_adaptive_weights_not_linear_in_intensity():
    s1, s2 = speckle(16, 16, seed=1), speckle(16, 16, seed=2)
    both = np.sqrt(np.abs(s1) ** 2 + np.abs(s2) ** 2)
    f, g = IntensityAdaptive(), Linear(LinearWeights.boxcar(5))
    assert np.allclose(g(both), g(s1) + g(s2), rtol=1e-12)
    assert not np.allclose(f(both), f(s1) + f(s2), rtol=1e-3)


def test_parse_despeckler():
    assert isinstance(parse_despeckler("identity"), Identity)
    assert parse_despeckler("boxcar:7").weights.kernel.shape == (7, 7)
    assert parse_despeckler("loggauss:1.5").sigma == 1.5
    assert parse_despeckler(f"external:{sys.executable} x.py").command == (sys.executable, "x.py")
    for bad in ("nope", "boxcar:x", "external", "loggauss:-1"):
        with pytest.raises(MuchaproError):
            parse_despeckler(bad)


def test_external_intensity_matches_identity():
    s = speckle(20, 30, seed=2)
    out = despeckle_external(s, [sys.executable, str(SCRIPTS / "ext_intensity.py")])
    s32 = s.astype(np.complex64).astype(np.complex128)
    assert np.array_equal(out, (np.abs(s32) ** 2).astype(np.float32).astype(np.float64))


def test_external_boxcar_matches_linear():
    s = speckle(20, 30, seed=3)
    out = External((sys.executable, str(SCRIPTS / "ext_boxcar.py"), "--size", "5"))(s)
    s32 = s.astype(np.complex64).astype(np.complex128)
    want = despeckle_linear(s32, LinearWeights.boxcar(5))
    assert np.allclose(out, want, rtol=1e-6)


def test_external_errors(tmp_path):
    s = np.ones((4, 4), complex)
    with pytest.raises(MuchaproError, match="cannot spawn"):
        despeckle_external(s, ["/nonexistent/despeckler-xyz"])
    with pytest.raises(MuchaproError, match="status 3"):
        despeckle_external(s, [sys.executable, "-c", "import sys; sys.exit(3)"])
    with pytest.raises(MuchaproError, match="unreadable"):
        despeckle_external(s, [sys.executable, "-c", "import sys; open(sys.argv[2], 'wb').write(b'junk')"])
    bad_shape = ("import sys, numpy as np; from muchapro.io import write_reflectivity; "
                 "write_reflectivity(sys.argv[2], np.ones((2, 2)))")
    with pytest.raises(MuchaproError, match="shape"):
        despeckle_external(s, [sys.executable, "-c", bad_shape])
    nan = ("import sys, numpy as np; from muchapro.io import write_reflectivity; "
           "write_reflectivity(sys.argv[2], np.full((4, 4), np.nan))")
    with pytest.raises(MuchaproError, match="non-finite"):
        despeckle_external(s, [sys.executable, "-c", nan])
