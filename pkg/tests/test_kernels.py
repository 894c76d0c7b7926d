import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from localtime import _kernels_py, kernels


def _direct_schur(rho, level_of, coeff):
    d = rho.shape[0]
    return np.array([[coeff[level_of[i], level_of[j]] * rho[i, j] for j in range(d)]
                     for i in range(d)])


def _direct_phase_sum(times, freqs, weights):
    return np.array([[sum(w * np.exp(-1j * t * f) for f, w in zip(fr, wr))
                      for fr, wr in zip(freqs, weights)] for t in times])


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_schur_apply_backends_agree(d, n, seed):
    rng = np.random.default_rng(seed)
    rho = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    level_of = rng.integers(0, n, d)
    coeff = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    expected = _direct_schur(rho, level_of, coeff)
    for name in kernels.available_backends():
        got = kernels.get_backend(name).schur_apply(
            rho, level_of.astype(np.intp), np.ascontiguousarray(coeff))
        np.testing.assert_allclose(got, expected, rtol=1e-14, atol=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 30), st.integers(1, 4), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_phase_sum_backends_agree(nt, npair, nk, seed):
    rng = np.random.default_rng(seed)
    times = rng.uniform(-20, 20, nt)
    freqs = rng.standard_normal((npair, nk))
    weights = rng.random((npair, nk))
    weights[0, 0] = 0.0
    expected = _direct_phase_sum(times, freqs, weights)
    for name in kernels.available_backends():
        got = kernels.get_backend(name).phase_sum(times, freqs, weights)
        np.testing.assert_allclose(got, expected, rtol=1e-12, atol=1e-12)


def test_phase_sum_chunking_matches_single_pass(monkeypatch):
    rng = np.random.default_rng(0)
    times = rng.uniform(0, 10, 300)
    freqs = rng.standard_normal((3, 50))
    weights = rng.random((3, 50))
    full = _kernels_py.phase_sum(times, freqs, weights)
    monkeypatch.setattr(_kernels_py, "_CHUNK_ELEMS", 64)
    np.testing.assert_allclose(_kernels_py.phase_sum(times, freqs, weights), full, rtol=1e-13)


def test_wrapper_coerces_inputs():
    out = kernels.phase_sum([0.0, 1.0], [[0.0, np.pi]], [0.5, 0.5])
    np.testing.assert_allclose(out[:, 0], [1.0, 0.0], atol=1e-15)
    out = kernels.schur_apply(np.eye(2), [0, 1], [[1, 2], [3, 4]])
    np.testing.assert_allclose(out, np.diag([1, 4]))


def test_backend_selection():
    assert kernels.BACKEND in kernels.available_backends()
    assert kernels.get_backend("python") is _kernels_py
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")
