import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from localtime import ltsmap, spectra, states


def test_from_pure_examples():
    np.testing.assert_allclose(states.from_pure([1, 0]).matrix, np.diag([1, 0]))
    np.testing.assert_allclose(states.from_pure([1, 1]).matrix, np.full((2, 2), 0.5))
    with pytest.raises(states.InvalidStateError):
        states.from_pure([0, 0])


def test_extremes_superposition_support():
    spec = spectra.spin_ensemble(4)
    rho = states.from_pure(states.extremes_superposition(spec, 1))
    assert np.linalg.matrix_rank(rho.matrix, tol=1e-10) == 1
    pops = spec.populations(rho.matrix)
    np.testing.assert_allclose(pops, [0.5, 0, 0, 0, 0.5], atol=1e-15)


def test_validation_rejects_and_never_repairs():
    with pytest.raises(states.InvalidStateError, match="Hermitian"):
        states.DensityMatrix(np.array([[0.5, 0.1], [0.0, 0.5]]))
    with pytest.raises(states.InvalidStateError, match="trace"):
        states.DensityMatrix(np.diag([0.5, 0.6]))
    with pytest.raises(states.InvalidStateError, match="negative"):
        states.DensityMatrix(np.diag([1.2, -0.2]))
    rho = states.DensityMatrix(np.diag([0.25, 0.75]))
    with pytest.raises(ValueError):
        rho.matrix[0, 0] = 1.0


def test_energy_stats_examples():
    spec = spectra.spin_ensemble(4)
    e = spec.bandwidth
    eig = states.from_pure(spec.basis_vector(2))
    assert states.energy_stats(eig, spec) == pytest.approx((0.0, 0.0, e / 2))
    psi = states.from_pure(states.extremes_superposition(spec, -1))
    mean, std, above = states.energy_stats(psi, spec)
    assert mean == pytest.approx(0.0, abs=1e-15)
    assert std == pytest.approx(e / 2)
    assert above == pytest.approx(e / 2)
    assert e / std == pytest.approx(2.0) and e / above == pytest.approx(2.0)
    mix = np.zeros(16)
    mix[0] = mix[-1] = 0.5
    assert states.energy_stats(states.DensityMatrix(np.diag(mix)), spec)[1] == pytest.approx(e / 2)


def test_luders_examples(rng):
    spec = spectra.spin_ensemble(3)
    diag = states.DensityMatrix(np.diag(rng.dirichlet(np.ones(8))))
    np.testing.assert_allclose(states.luders_project(diag, spec).matrix, diag.matrix)
    psi = states.from_pure(states.extremes_superposition(spec, 1))
    expected = np.zeros((8, 8))
    expected[0, 0] = expected[7, 7] = 0.5
    np.testing.assert_allclose(states.luders_project(psi, spec).matrix, expected, atol=1e-15)
    rho = states.random_density(8, rng)
    once = states.luders_project(rho, spec)
    np.testing.assert_allclose(states.luders_project(once, spec).matrix, once.matrix)


def test_fidelity_examples():
    rho = states.from_pure([1, 0])
    assert states.fidelity(rho, [1, 0]) == 1.0
    assert states.fidelity(rho, [0, 1]) == 0.0


def test_fidelity_floor_time_independent():
    spec = spectra.spin_ensemble(4)
    e = spec.bandwidth
    lam = 1.1 * (e / math.pi) ** 2
    psi = states.extremes_superposition(spec, 1)
    rho = states.from_pure(psi)
    for t0 in np.random.default_rng(3).uniform(0, 50, 20):
        sigma = ltsmap.apply(ltsmap.exact_map(spec, ltsmap.LocalTimeParams(t0, lam)), rho)
        f = states.fidelity(sigma, spec.unitary(t0) @ psi)
        # sqrt((1 + exp(-pi^2/4.4)) / 2) computed by hand: 0.743683...
        assert f == pytest.approx(0.7436833508550048, abs=1e-10)


def test_trace_distance_examples():
    a = states.DensityMatrix(np.diag([0.7, 0.3]))
    b = states.DensityMatrix(np.diag([0.3, 0.7]))
    assert states.trace_distance(a, a) == 0.0
    assert states.trace_distance(a, b) == pytest.approx(0.4)
    assert states.trace_distance(states.from_pure([1, 0]), states.from_pure([0, 1])) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        states.trace_distance(a, states.maximally_mixed(3))


def test_dimension_mismatch():
    spec = spectra.spin_ensemble(2)
    with pytest.raises(ValueError):
        states.energy_stats(states.maximally_mixed(3), spec)
    with pytest.raises(ValueError):
        states.fidelity(states.maximally_mixed(3), [1, 0])


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2**32 - 1))
def test_pure_state_trace_distance_vs_fidelity(d, seed):
    rng = np.random.default_rng(seed)
    a, b = states.random_pure(d, rng), states.random_pure(d, rng)
    f = states.fidelity(states.from_pure(a), b)
    td = states.trace_distance(states.from_pure(a), states.from_pure(b))
    assert abs(td - math.sqrt(max(1 - f**2, 0.0))) < 1e-10


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1), st.floats(0, 30), st.floats(0.1, 20))
def test_map_invariants_on_states(n, seed, t0, lam):
    rng = np.random.default_rng(seed)
    spec = spectra.spin_ensemble(n)
    rho = states.random_density(spec.dim, rng)
    m = ltsmap.exact_map(spec, ltsmap.LocalTimeParams(t0, lam))
    out = ltsmap.apply(m, rho)
    # energy conservation
    np.testing.assert_allclose(states.energy_stats(out, spec), states.energy_stats(rho, spec), atol=1e-10)
    # Luders projection commutes with the map
    lud = states.luders_project(rho, spec)
    np.testing.assert_allclose(states.luders_project(out, spec).matrix, lud.matrix, atol=1e-12)
    np.testing.assert_allclose(ltsmap.apply(m, lud).matrix, lud.matrix, atol=1e-12)
