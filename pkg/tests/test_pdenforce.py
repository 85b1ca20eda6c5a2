import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from muchapro.core import CovarianceField, MuchaproError
from muchapro.pdenforce import PDEnforceParams, cholesky_ok, enforce_pd, enforce_pd_field, pd_pass_rate

from conftest import random_hermitian


def coherences(M):
    D = M.shape[-1]
    d = np.real(np.diagonal(M, axis1=-2, axis2=-1))
    return [np.abs(M[..., i, j]) / np.sqrt(d[..., i] * d[..., j]) for i in range(D) for j in range(i + 1, D)]


def test_inactive_branches_unchanged():
    C = np.array([[1, 0.5], [0.5, 1]], dtype=complex)
    assert np.array_equal(enforce_pd(C, PDEnforceParams(0.01, 0.99)), C)


def test_hand_trace():
    C = np.array([[-0.3, 1.2], [1.2, 1]], dtype=complex)
    out = enforce_pd(C, PDEnforceParams(0.01, 0.9))
    assert out[0, 0] == 0.01 and out[1, 1] == 1
    # clipped-diagonal coherence 1.2 / sqrt(0.01) = 12 -> scaled to 0.9
    assert out[0, 1] == pytest.approx(0.09, rel=1e-14)
    assert abs(out[0, 1]) / np.sqrt(0.01) <= 0.9
    assert out[1, 0] == np.conj(out[0, 1])


def test_phase_preserved():
    C = np.array([[1, 3 * np.exp(0.7j)], [3 * np.exp(-0.7j), 1]])
    out = enforce_pd(C, PDEnforceParams(0.01, 0.8))
    assert np.angle(out[0, 1]) == pytest.approx(0.7, abs=1e-14)


def test_param_validation():
    for r, rho in ((0, 0.5), (-1, 0.5), (1, 0), (1, 1), (1, 1.5)):
        with pytest.raises(MuchaproError):
            PDEnforceParams(r, rho)


def test_identity_field_unchanged():
    C = CovarianceField.constant(np.eye(3), 4, 5)
    out = enforce_pd_field(C, PDEnforceParams(1.0, 0.99))
    assert np.array_equal(out.values, C.values)


def test_auto_floor():
    C = CovarianceField.constant(np.diag([2.0, 4.0]), 3, 3)
    assert PDEnforceParams.for_field(C).r_thml == pytest.approx(3e-3)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1), st.floats(1e-4, 1.0), st.floats(0.05, 0.999))
def test_bounds_and_idempotence(D, seed, r, rho):
    rng = np.random.default_rng(seed)
    M = random_hermitian(rng, D, psd=False)[None] * np.ones((6, 1, 1))
    M = M + random_hermitian(rng, D, psd=False)
    field = CovarianceField.from_matrices(M.reshape(2, 3, D, D))
    p = PDEnforceParams(r, rho)
    once = enforce_pd_field(field, p)
    twice = enforce_pd_field(once, p)
    assert np.array_equal(once.values, twice.values)
    out = once.matrices()
    assert np.all(np.real(np.diagonal(out, axis1=-2, axis2=-1)) >= r)
    for g in coherences(out):
        assert np.all(g <= rho)


def test_d2_always_cholesky(rng):
    M = np.stack([random_hermitian(rng, 2, psd=False) for _ in range(2000)])
    field = CovarianceField.from_matrices(M.reshape(40, 50, 2, 2))
    out = enforce_pd_field(field, PDEnforceParams(1e-3, 0.99))
    assert pd_pass_rate(out) == 1.0


def test_cholesky_ok():
    assert cholesky_ok(np.array([np.eye(2), -np.eye(2)])).tolist() == [True, False]
