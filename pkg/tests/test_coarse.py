import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from localtime import coarse, ltsmap, markov, spectra, states
from localtime.ltsmap import LocalTimeParams


def paired():
    return spectra.from_diagonal([0.0, 0.01, 10.0, 10.01])


def test_all_far_gives_singletons():
    spec = spectra.from_diagonal([0.0, 10.0])
    cg = coarse.build_coarse_graining(spec, 1.0, 0.02, 0.95)
    assert cg.companions == {0: (), 1: ()}
    assert cg.g == 0
    assert np.all(cg.pi_projector(0) == 0)


def test_paired_spectrum():
    spec = paired()
    cg = coarse.build_coarse_graining(spec, 1.0)
    assert cg.companions == {0: (1,), 2: (3,)}
    assert cg.deltas[0] == pytest.approx(0.01)
    assert cg.deltas[2] == pytest.approx(0.01, abs=1e-12)
    assert (cg.g, cg.g_max) == (1, 1)
    assert ltsmap.gaussian_factor(10.0, 1.0) == pytest.approx(math.exp(-25))


def test_spin_with_wide_spread_not_admissible():
    spec = spectra.spin_ensemble(4)
    # minimal lambda for the Delta H = 0.4 E state: sqrt(lam) = 2 * 1.6 / pi
    lam = (2 * 1.6 / math.pi) ** 2
    with pytest.raises(coarse.CoarseGrainingError, match="no admissible coarse-graining"):
        coarse.build_coarse_graining(spec, lam)


def test_threshold_validation():
    spec = paired()
    with pytest.raises(ValueError):
        coarse.build_coarse_graining(spec, 1.0, 0.9, 0.5)
    with pytest.raises(ValueError):
        coarse.build_coarse_graining(spec, -1.0)
    with pytest.raises(ValueError):
        coarse.build_coarse_graining(spec, 1.0, mode="window")
    with pytest.raises(ValueError):
        coarse.build_coarse_graining(spec, 1.0, mode="other")


def test_window_mode_overlapping_companions():
    spec = spectra.from_diagonal([0.0, 1.0, 2.0, 3.0])
    cg = coarse.build_coarse_graining(spec, 0.1, mode="window", width=1.0)
    assert cg.companions == {0: (1,), 1: (2,), 2: (3,), 3: ()}
    with pytest.raises(coarse.CoarseGrainingError):
        coarse.build_coarse_graining(spec, 5.0, mode="window", width=1.0)


def test_invalid_companion_sets():
    spec = paired()
    with pytest.raises(ValueError):
        coarse.from_groups(spec, {0: (0,)})
    with pytest.raises(ValueError):
        coarse.from_groups(spec, {0: (1,), 1: (0,)})


def test_singleton_approx_is_luders():
    spec = spectra.from_diagonal([0.0, 10.0])
    cg = coarse.build_coarse_graining(spec, 1.0)
    m = coarse.approx_map(spec, cg, 3.3)
    assert m.max_difference(ltsmap.luders_map(spec)) == 0.0


def test_pair_coherence_rotates():
    spec = paired()
    cg = coarse.build_coarse_graining(spec, 1.0)
    psi = np.array([1, 1, 0, 0]) / math.sqrt(2)
    rho = states.from_pure(psi)
    t = 37.0
    out = ltsmap.apply(coarse.approx_map(spec, cg, t), rho).matrix
    assert abs(out[0, 1]) == pytest.approx(0.5)
    assert out[0, 1] == pytest.approx(0.5 * np.exp(1j * t * 0.01), abs=1e-12)
    # the sharp evolution gives the same phase: exp(-i t (E_0 - E_1))
    u = spec.unitary(t)
    assert (u @ rho.matrix @ u.conj().T)[0, 1] == pytest.approx(out[0, 1], abs=1e-12)


def test_deviation_from_exact_bounded():
    rng = np.random.default_rng(5)
    for _ in range(10):
        spec = coarse.synthetic_grouped_spectrum(5, 3, rng, delta0=0.2, spacing=20.0)
        lam = 10.0
        cg = coarse.build_coarse_graining(spec, lam)
        for t0 in rng.uniform(0, 100, 5):
            exact = ltsmap.exact_map(spec, LocalTimeParams(t0, lam))
            approx = coarse.approx_map(spec, cg, t0, phases="pair", companions="unit")
            assert exact.max_difference(approx) <= max(coarse.DEFAULT_FAR, 1 - coarse.DEFAULT_NEAR)


def test_approximation_quality_on_states():
    rng = np.random.default_rng(8)
    spec = coarse.synthetic_grouped_spectrum(3, 2, rng, delta0=0.2, spacing=20.0)
    lam = 10.0
    cg = coarse.build_coarse_graining(spec, lam)
    for _ in range(20):
        rho = states.random_density(spec.dim, rng)
        t0 = rng.uniform(0, 50)
        exact = ltsmap.exact_map(spec, LocalTimeParams(t0, lam))
        approx = coarse.approx_map(spec, cg, t0, phases="pair", companions="unit")
        diff = np.abs(exact.coeff - approx.coeff)
        pops = spec.populations(rho.matrix)
        bound = 0.5 * np.sum(diff * np.sqrt(np.outer(pops, pops)))
        td = states.trace_distance(ltsmap.apply(exact, rho), ltsmap.apply(approx, rho))
        assert td <= bound + 1e-12


def test_divisibility_examples():
    spec = spectra.from_diagonal([0.0, 10.0])
    assert coarse.check_divisibility(spec, coarse.build_coarse_graining(spec, 1.0), 2.0, 1.0) == 0.0
    spec = paired()
    cg = coarse.build_coarse_graining(spec, 1.0)
    rng = np.random.default_rng(1)
    for _ in range(50):
        t0 = rng.uniform(0, 1e3)
        assert coarse.check_divisibility(spec, cg, t0, rng.uniform(0, t0)) <= 1e-14
    with pytest.raises(ValueError):
        coarse.check_divisibility(spec, cg, 1.0, 2.0)


def test_cp_scan_examples(backend):
    spec = spectra.from_diagonal([0.0, 10.0])
    rep = coarse.cp_scan(spec, coarse.build_coarse_graining(spec, 1.0), np.linspace(0, 10, 11))
    # identity coefficient matrix: smallest eigenvalue 1 (see decisions ledger)
    np.testing.assert_allclose(rep.min_eigs, 1.0)
    assert rep.violation_fraction == 0.0
    spec = paired()
    rep = coarse.cp_scan(spec, coarse.build_coarse_graining(spec, 1.0), np.linspace(0, 500, 101))
    np.testing.assert_allclose(rep.min_eigs, 0.0, atol=1e-14)
    assert rep.violation_fraction == 0.0


def test_cp_scan_star_conventions():
    spec = spectra.from_diagonal([0.0, 0.01, 0.02])
    cg = coarse.build_coarse_graining(spec, 1.0)
    assert cg.companions == {0: (1, 2)}
    rep = coarse.cp_scan(spec, cg, np.linspace(0, 100, 50))
    # [[1, b, b], [b*, 1, 0], [b*, 0, 1]] with |b| = 1: eigenvalues 1 +- sqrt(2), 1
    np.testing.assert_allclose(rep.min_eigs, 1 - math.sqrt(2), atol=1e-12)
    np.testing.assert_allclose(rep.min_eigs_unit, 0.0, atol=1e-12)
    assert rep.violation_fraction == 1.0 and rep.violation_fraction_unit == 0.0


def test_cp_scan_probe_validation():
    spec = paired()
    cg = coarse.build_coarse_graining(spec, 1.0)
    with pytest.raises(ValueError):
        coarse.cp_scan(spec, cg, [1.0], probe=[1.0, 0.0])
    with pytest.raises(ValueError):
        coarse.cp_scan(spec, cg, [1.0], probe=[1.0, 1.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        coarse.cp_scan(spec, cg, [])


def test_sustained_time():
    t = np.arange(5.0)
    assert coarse.sustained_time(t, np.array([False, True, False, True, True])) == 3.0
    assert coarse.sustained_time(t, np.ones(5, bool)) == 0.0
    assert coarse.sustained_time(t, np.array([True] * 4 + [False])) == math.inf


def random_admissible(seed, n_levels=12):
    rng = np.random.default_rng(seed)
    sizes = []
    while sum(sizes) < n_levels:
        sizes.append(int(rng.integers(1, 4)))
    energies = []
    for g, size in enumerate(sizes):
        energies.extend(30.0 * g + rng.uniform(0.1, 0.4) * np.arange(size))
    spec = spectra.from_diagonal(energies)
    return spec, coarse.build_coarse_graining(spec, 20.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_projector_algebra(seed):
    spec, cg = random_admissible(seed)
    ps = spec.projectors()
    for m in cg.retained:
        pim = cg.pi_projector(m)
        assert np.all(ps[m] @ pim == 0)
        for mp in cg.retained:
            pimp = cg.pi_projector(mp)
            assert np.all(ps[m] @ pimp == pimp @ ps[m])
            if np.any(ps[m] @ pimp != 0):
                assert np.all(ps[mp] @ pim == 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_divisibility_random_cg(seed):
    spec, cg = random_admissible(seed)
    rng = np.random.default_rng(seed)
    # rounding of t * f grows like eps * t0 * max|f|; keep t0 * max|f| near 10
    for _ in range(50):
        t0 = rng.uniform(0, 20)
        tp = rng.uniform(0, t0)
        for conv in ("omit", "unit"):
            assert coarse.check_divisibility(spec, cg, t0, tp, companions=conv) <= 1e-14


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 1e3))
def test_approx_map_structure(seed, t0):
    spec, cg = random_admissible(seed)
    rng = np.random.default_rng(seed)
    m = coarse.approx_map(spec, cg, t0)
    rho = states.random_density(spec.dim, rng)
    out = m.act(rho.matrix)
    assert abs(np.trace(out) - 1) < 1e-12
    assert np.max(np.abs(out - out.conj().T)) < 1e-12
    mm = np.eye(spec.dim) / spec.dim
    assert np.max(np.abs(m.act(mm) - mm)) < 1e-15


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_scan_consistency(seed):
    spec, cg = random_admissible(seed)
    rng = np.random.default_rng(seed)
    times = np.sort(rng.uniform(0, 200, 25))
    probe = rng.random(spec.dim)
    probe /= np.linalg.norm(probe)
    rep = coarse.cp_scan(spec, cg, times, probe)
    s = np.bincount(spec.level_of, weights=probe, minlength=spec.count)
    for i, t in enumerate(times):
        m = coarse.approx_map(spec, cg, t)
        assert (rep.min_eigs[i] >= -1e-10) == markov.is_cp(m).is_cp
        assert rep.min_eigs[i] == pytest.approx(markov.is_cp(m).min_eigenvalue, abs=1e-12)
        # criterion = s^dag c s / d (a Choi expectation), non-negative whenever CP
        assert rep.probe_criterion[i] == pytest.approx(np.real(s @ m.coeff @ s) / spec.dim, abs=1e-12)
        if rep.min_eigs[i] >= -1e-10:
            assert rep.probe_criterion[i] >= -1e-12
    assert 0.0 <= rep.violation_fraction <= 1.0
