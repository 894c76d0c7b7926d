"""Reduced dynamics of a subsystem under a pure-decoherence interaction.

The interaction is H_int = sum_{a,b} E[a, b] P_a (x) Pi_b with orthogonal
system blocks P_a and environment blocks Pi_b. In the strong-interaction
regime the system's own Hamiltonian is dropped, and the reduced map is again
a block map over the system blocks with coefficients

    B[a, c](t0) = sum_b p_b exp(-i t0 (E[a,b] - E[c,b])) exp(-(E[a,b] - E[c,b])^2 / (4 lam))

where p_b = tr(Pi_b rho_E). The environment state only enters through p.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .coarse import (CoarseGraining, CpScanReport, DEFAULT_FAR, DEFAULT_NEAR, _probe_sums,
                     from_groups, greedy_groups, min_eig_series)
from .ltsmap import BlockCoefficientMap, compose, gaussian_factor
from .markov import PSD_TOL
from .spectra import SpectralDecomposition, block_structure
from .states import DensityMatrix, luders_project

EPS_DEC = 0.05
PERSIST = 10
REVIVAL = 0.5


class InteractionWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class PureDecoherenceInteraction:
    """Energy grid E[a, b] with block sizes of the system and environment projectors.

    Blocks occupy contiguous basis ranges in index order on both sides.
    """

    e_grid: np.ndarray
    sys_mults: Optional[Sequence[int]] = None
    env_mults: Optional[Sequence[int]] = None
    warnings: tuple = field(default=(), init=False)

    def __post_init__(self):
        e = np.array(self.e_grid, dtype=float)
        if e.ndim != 2 or e.size == 0:
            raise ValueError("e_grid must be a non-empty 2-D array")
        if not np.all(np.isfinite(e)):
            raise ValueError("e_grid must be finite")
        e.setflags(write=False)
        object.__setattr__(self, "e_grid", e)
        for name, n in (("sys_mults", e.shape[0]), ("env_mults", e.shape[1])):
            g = np.ones(n, dtype=np.int64) if getattr(self, name) is None \
                else np.asarray(getattr(self, name), dtype=np.int64)
            if g.shape != (n,) or np.any(g < 1):
                raise ValueError(f"{name} must hold {n} positive block sizes")
            object.__setattr__(self, name, g)
        flat = np.sort(e.ravel())
        scale = max(1.0, float(np.max(np.abs(flat))))
        warns = ()
        if np.any(np.diff(flat) <= 1e-12 * scale):
            warns = ("degenerate interaction energies: E[a,b] = E[c,d] for distinct pairs",)
        object.__setattr__(self, "warnings", warns)

    @property
    def n_sys(self) -> int:
        return self.e_grid.shape[0]

    @property
    def n_env(self) -> int:
        return self.e_grid.shape[1]

    @property
    def d_sys(self) -> int:
        return int(self.sys_mults.sum())

    @property
    def d_env(self) -> int:
        return int(self.env_mults.sum())

    @property
    def sys_spec(self) -> SpectralDecomposition:
        return block_structure(self.sys_mults)

    def differences(self) -> np.ndarray:
        """diff[a, c, b] = E[a, b] - E[c, b]."""
        return self.e_grid[:, None, :] - self.e_grid[None, :, :]


def env_probabilities(inter: PureDecoherenceInteraction, rho_env) -> np.ndarray:
    """p_b = tr(Pi_b rho_E); a probability vector is accepted as is."""
    if isinstance(rho_env, DensityMatrix):
        if rho_env.dim != inter.d_env:
            raise ValueError(f"environment state has dimension {rho_env.dim}, expected {inter.d_env}")
        diag = np.real(np.diag(rho_env.matrix))
        labels = np.repeat(np.arange(inter.n_env), inter.env_mults)
        return np.bincount(labels, weights=diag, minlength=inter.n_env)
    p = np.asarray(rho_env, dtype=float).ravel()
    if p.size != inter.n_env:
        raise ValueError(f"probability vector has length {p.size}, expected {inter.n_env}")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
        raise ValueError("environment probabilities must be non-negative and sum to 1")
    return p


@dataclass(frozen=True, eq=False)
class CoherenceFactors:
    b: np.ndarray
    zeta: np.ndarray
    weights: np.ndarray


def coherence_factors(inter: PureDecoherenceInteraction, rho_env, lam: float,
                      t0: float, k: int = 1) -> CoherenceFactors:
    """B(t0), zeta and the normalized per-pair weights p_b^(ac).

    ``k`` multiplies the Gaussian exponent (k-fold composition of the family).
    """
    p = env_probabilities(inter, rho_env)
    diff = inter.differences()
    damp = p * gaussian_factor(diff, lam / k)
    zeta = damp.sum(axis=2)
    b = np.sum(damp * np.exp(-1j * t0 * diff), axis=2)
    np.fill_diagonal(b, 1.0)
    np.fill_diagonal(zeta, 1.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        weights = np.where(zeta[:, :, None] > 0, damp / zeta[:, :, None], 0.0)
    return CoherenceFactors(b, zeta, weights)


def reduced_exact_map(inter: PureDecoherenceInteraction, rho_env, lam: float,
                      t0: float) -> BlockCoefficientMap:
    cf = coherence_factors(inter, rho_env, lam, t0)
    return BlockCoefficientMap(inter.sys_spec, cf.b, t0=t0, kind="reduced-exact",
                               notes=inter.warnings)


def kfold_reduced(inter: PureDecoherenceInteraction, rho_env, lam: float, t0: float,
                  k: int) -> BlockCoefficientMap:
    """Composition over k equal subintervals: phases add up, Gaussian exponents scale by k."""
    if k < 1:
        raise ValueError("k must be a positive integer")
    cf = coherence_factors(inter, rho_env, lam, t0, k=k)
    return BlockCoefficientMap(inter.sys_spec, cf.b, t0=t0, kind=f"reduced-kfold({k})")


def steady_state(inter: PureDecoherenceInteraction, rho_sys: DensityMatrix) -> DensityMatrix:
    return luders_project(rho_sys, inter.sys_spec)


def coherence_series(inter: PureDecoherenceInteraction, rho_env, lam: float, times,
                     pairs: Optional[Sequence[tuple]] = None) -> tuple:
    """(pairs, B) with B[t, j] the coherence factor of pairs[j] along the grid."""
    p = env_probabilities(inter, rho_env)
    if pairs is None:
        pairs = [(a, c) for a in range(inter.n_sys) for c in range(a + 1, inter.n_sys)]
    times = np.asarray(times, dtype=float).ravel()
    if not pairs:
        return [], np.zeros((times.size, 0), dtype=complex)
    diff = np.array([inter.e_grid[a] - inter.e_grid[c] for a, c in pairs])
    weights = p * gaussian_factor(diff, lam)
    return list(pairs), kernels.phase_sum(times, diff, weights)


@dataclass
class DecoherenceProfile:
    times: np.ndarray
    max_modulus: np.ndarray
    decoherence_time: float
    recurrence_time: float


def decoherence_time_of(times: np.ndarray, series: np.ndarray, eps: float = EPS_DEC,
                        persist: int = PERSIST) -> float:
    """First time the series drops below eps and stays there for ``persist`` samples."""
    run = 0
    for i, below in enumerate(series < eps):
        run = run + 1 if below else 0
        if run == persist:
            return float(times[i - persist + 1])
    return math.inf


def recurrence_time_of(times: np.ndarray, series: np.ndarray, frac: float = REVIVAL) -> float:
    """Peak of the first revival above frac * series[0] after the first drop below it."""
    level = frac * series[0]
    below = np.flatnonzero(series < level)
    if below.size == 0:
        return math.inf
    after = np.flatnonzero(series[below[0]:] >= level)
    if after.size == 0:
        return math.inf
    start = below[0] + after[0]
    stop = np.flatnonzero(series[start:] < level)
    stop = series.size if stop.size == 0 else start + stop[0]
    return float(times[start + int(np.argmax(series[start:stop]))])


def decoherence_profile(inter: PureDecoherenceInteraction, rho_env, lam: float, time_grid, *,
                        eps_dec: float = EPS_DEC, persist: int = PERSIST,
                        revival: float = REVIVAL) -> DecoherenceProfile:
    times = np.asarray(time_grid, dtype=float).ravel()
    if times.size == 0:
        raise ValueError("empty time grid")
    _, b = coherence_series(inter, rho_env, lam, times)
    series = np.max(np.abs(b), axis=1) if b.shape[1] else np.zeros(times.size)
    return DecoherenceProfile(times, series, decoherence_time_of(times, series, eps_dec, persist),
                              recurrence_time_of(times, series, revival))


def pair_factor_matrix(inter: PureDecoherenceInteraction, rho_env, lam: float) -> np.ndarray:
    """zeta[a, c]: the time-independent bound on |B[a, c]|."""
    return coherence_factors(inter, rho_env, lam, 0.0).zeta


def reduced_coarse_graining(inter: PureDecoherenceInteraction, rho_env, lam: float,
                            far_threshold: float = DEFAULT_FAR,
                            near_threshold: float = DEFAULT_NEAR) -> CoarseGraining:
    """Greedy grouping of system blocks, ordered by mean interaction energy, using zeta."""
    if not 0 < far_threshold < near_threshold < 1:
        raise ValueError("need 0 < far_threshold < near_threshold < 1")
    p = env_probabilities(inter, rho_env)
    zeta = pair_factor_matrix(inter, p, lam)
    order = [int(a) for a in np.argsort(inter.e_grid @ p, kind="stable")]
    groups = greedy_groups(order, zeta, near_threshold, far_threshold)
    return reduced_groups(inter, p, {grp[0]: grp[1:] for grp in groups})


def star_coarse_graining(inter: PureDecoherenceInteraction, rho_env,
                         rep: int = 0) -> CoarseGraining:
    """One group: ``rep`` with every other system block as companion."""
    return reduced_groups(inter, rho_env, {rep: [a for a in range(inter.n_sys) if a != rep]})


def reduced_groups(inter: PureDecoherenceInteraction, rho_env, companions: dict) -> CoarseGraining:
    """Coarse graining over system blocks; delta is the p-weighted mean companion gap."""
    p = env_probabilities(inter, rho_env)
    d = companion_gaps(inter, companions)
    deltas = {m: float(d[m] @ p) for m in companions}
    return from_groups(inter.sys_spec, companions, deltas)


def companion_gaps(inter: PureDecoherenceInteraction, companions: dict) -> dict:
    """delta[a][b] = mean over companions nu of E[a, b] - E[nu, b]."""
    e = inter.e_grid
    return {m: (e[m] - e[list(nus)].mean(axis=0)) if len(nus) else np.zeros(inter.n_env)
            for m, nus in companions.items()}


def _reduced_entries(inter, p, cg, times, companions):
    gaps = companion_gaps(inter, cg.companions)
    reps = [m for m in cg.retained if cg.companions[m]]
    entries = {}
    if not reps:
        return entries, reps, np.zeros((times.size, 0), dtype=complex)
    freqs = np.array([gaps[m] for m in reps])
    b = kernels.phase_sum(times, freqs, np.broadcast_to(p, freqs.shape))
    if companions == "unit":
        for m in reps:
            for a in cg.companions[m]:
                for c in cg.companions[m]:
                    if a < c:
                        entries[(a, c)] = np.ones(times.size, dtype=complex)
    for j, m in enumerate(reps):
        for nu in cg.companions[m]:
            entries[(m, nu)] = b[:, j]
    return entries, reps, b


def approx_reduced_map(inter: PureDecoherenceInteraction, rho_env, cg: CoarseGraining,
                       t0: float, companions: str = "omit") -> BlockCoefficientMap:
    """Coarse-grained reduced map: sum_b p_b exp(-i t0 delta[a, b]) on (a, nu_a) blocks."""
    if not cg.spec.same_blocks(inter.sys_spec):
        raise ValueError("coarse graining does not match the system blocks")
    if companions not in ("omit", "unit"):
        raise ValueError("companions must be 'omit' or 'unit'")
    p = env_probabilities(inter, rho_env)
    entries, _, _ = _reduced_entries(inter, p, cg, np.array([float(t0)]), companions)
    coeff = np.eye(inter.n_sys, dtype=complex)
    for (a, c), vals in entries.items():
        coeff[a, c] = vals[0]
        coeff[c, a] = np.conj(vals[0])
    return BlockCoefficientMap(inter.sys_spec, coeff, t0=t0, kind=f"reduced-approx({companions})")


def joint_spec(inter: PureDecoherenceInteraction) -> SpectralDecomposition:
    """Blocks P_a (x) Pi_b of the system-environment space, label a * n_env + b."""
    sys_idx = np.repeat(np.arange(inter.n_sys), inter.sys_mults)
    env_idx = np.repeat(np.arange(inter.n_env), inter.env_mults)
    label = (sys_idx[:, None] * inter.n_env + env_idx[None, :]).ravel()
    sets = tuple(np.flatnonzero(label == j) for j in range(inter.n_sys * inter.n_env))
    mults = np.outer(inter.sys_mults, inter.env_mults).ravel()
    return SpectralDecomposition(np.arange(mults.size, dtype=float), mults, 1.0,
                                 index_sets=sets, label="joint-blocks")


def joint_approx_map(inter: PureDecoherenceInteraction, cg: CoarseGraining, t0: float,
                     companions: str = "omit") -> BlockCoefficientMap:
    """Coarse-grained map on the system-environment space.

    Each environment block b carries its own phase exp(-i t0 delta[a, b]) on the
    (a, nu_a) pairs. Coherences between different environment blocks are
    dropped; they never reach the reduced state. Tracing out the environment
    of the image of rho_S (x) rho_E reproduces ``approx_reduced_map``.
    """
    if companions not in ("omit", "unit"):
        raise ValueError("companions must be 'omit' or 'unit'")
    ne = inter.n_env
    gaps = companion_gaps(inter, cg.companions)
    coeff = np.eye(inter.n_sys * ne, dtype=complex)
    env = np.arange(ne)
    for m in cg.retained:
        nus = cg.companions[m]
        if companions == "unit":
            for a in nus:
                for c in nus:
                    if a != c:
                        coeff[a * ne + env, c * ne + env] = 1.0
        phase = np.exp(-1j * t0 * gaps[m])
        for nu in nus:
            coeff[m * ne + env, nu * ne + env] = phase
            coeff[nu * ne + env, m * ne + env] = np.conj(phase)
    return BlockCoefficientMap(joint_spec(inter), coeff, t0=t0, kind=f"joint-approx({companions})")


def check_reduced_divisibility(inter: PureDecoherenceInteraction, cg: CoarseGraining, t0: float,
                               t_prime: float, companions: str = "omit") -> float:
    """max |C(t0) - C(t0 - t') C(t')| for the joint coarse-grained family.

    The reduced coefficients sum_b p_b exp(-i t delta[a, b]) do not compose
    among themselves once two environment blocks carry different gaps, so the
    composition is taken before the environment is traced out.
    """
    if not 0 < t_prime <= t0:
        raise ValueError("need 0 < t' <= t0")
    total = joint_approx_map(inter, cg, t0, companions)
    split = compose(joint_approx_map(inter, cg, t0 - t_prime, companions),
                    joint_approx_map(inter, cg, t_prime, companions))
    return total.max_difference(split)


def cp_scan_reduced(inter: PureDecoherenceInteraction, rho_env, cg: CoarseGraining, time_grid,
                    probe=None, psd_tol: float = PSD_TOL) -> CpScanReport:
    """CP along the grid for the approximate reduced map.

    The probe value is (1/d) sum_a s_a^2 + (1/d) sum_a eps_a(t) chi_a with
    eps_a(t) = 2 sum_b p_b cos(delta[a, b] t). ``extras`` carries eps_max(t)
    and g' (the largest companion-projector trace).
    """
    times = np.asarray(time_grid, dtype=float).ravel()
    if times.size == 0:
        raise ValueError("empty time grid")
    p = env_probabilities(inter, rho_env)
    spec = inter.sys_spec
    _, s = _probe_sums(spec, probe)
    d = spec.dim
    entries, reps, b = _reduced_entries(inter, p, cg, times, "omit")
    entries_u, _, _ = _reduced_entries(inter, p, cg, times, "unit")
    chi = np.array([s[m] * sum(s[nu] for nu in cg.companions[m]) for m in reps])
    eps = 2.0 * b.real
    big_c = float(np.sum(s**2))
    criterion = (big_c + eps @ chi) / d
    eps_max = eps.max(axis=1) if reps else np.zeros(times.size)
    min_eigs = min_eig_series(inter.n_sys, entries, times.size)
    min_eigs_u = min_eig_series(inter.n_sys, entries_u, times.size)
    return CpScanReport(
        times=times,
        min_eigs=min_eigs,
        probe_criterion=criterion,
        violation_fraction=float(np.mean(min_eigs < -psd_tol)),
        min_eigs_unit=min_eigs_u,
        violation_fraction_unit=float(np.mean(min_eigs_u < -psd_tol)),
        criterion_violation_fraction=float(np.mean(criterion < -psd_tol)),
        chi=chi,
        big_c=big_c,
        g=cg.g,
        g_max=cg.g_max,
        extras={"eps_max": eps_max, "g_prime": cg.g},
    )


def dephasing_rates(gamma, a_values) -> np.ndarray:
    """Gamma[m, n] = v^T gamma v with v = a[:, m] - a[:, n]."""
    g = np.atleast_2d(np.asarray(gamma, dtype=complex))
    a = np.atleast_2d(np.asarray(a_values, dtype=float))
    if g.shape[0] != g.shape[1] or g.shape[0] != a.shape[0]:
        raise ValueError("gamma must be K x K with one row of a-values per operator")
    if np.max(np.abs(g - g.conj().T)) > 1e-10 or np.linalg.eigvalsh(0.5 * (g + g.conj().T))[0] < -1e-10:
        raise ValueError("gamma must be positive semidefinite")
    v = a[:, :, None] - a[:, None, :]
    rates = np.einsum("kmn,kl,lmn->mn", v, g, v).real
    np.fill_diagonal(rates, 0.0)
    return rates


def lindblad_dephasing(gamma, a_values, rho0: DensityMatrix, t: float) -> DensityMatrix:
    """Closed-form solution with the commutator dropped: rho_mn(t) = rho_mn(0) exp(-Gamma_mn t / 2).

    The Lindblad operators are diagonal in the basis of ``rho0`` with
    eigenvalues ``a_values[k, m]``.
    """
    rates = dephasing_rates(gamma, a_values)
    if rates.shape[0] != rho0.dim:
        raise ValueError("a-values do not match the state dimension")
    return DensityMatrix(rho0.matrix * np.exp(-0.5 * rates * t), check=False)


@dataclass
class LindbladComparison:
    times: np.ndarray
    pairs: list
    lts: np.ndarray
    lindblad: np.ndarray
    rates: np.ndarray
    lts_crossing: list
    lindblad_crossing: list


def _crossing(times, series, level=math.exp(-1.0)):
    idx = np.flatnonzero(series < level)
    return float(times[idx[0]]) if idx.size else math.inf


def lts_vs_lindblad(inter: PureDecoherenceInteraction, rho_env, lam: float, gamma, a_values,
                    time_grid, window: int = 1) -> LindbladComparison:
    """|B| (optionally running-averaged over ``window`` samples) against exp(-Gamma t / 2)."""
    times = np.asarray(time_grid, dtype=float).ravel()
    pairs, b = coherence_series(inter, rho_env, lam, times)
    lts = np.abs(b)
    if window > 1:
        kernel = np.ones(window) / window
        lts = np.column_stack([np.convolve(col, kernel, mode="same") for col in lts.T]) \
            if lts.shape[1] else lts
    rates = dephasing_rates(gamma, a_values)
    if rates.shape[0] != inter.n_sys:
        raise ValueError("a-values must give one value per system block")
    lind = np.column_stack([np.exp(-0.5 * rates[a, c] * times) for a, c in pairs]) \
        if pairs else np.zeros((times.size, 0))
    return LindbladComparison(
        times, pairs, lts, lind, np.array([rates[a, c] for a, c in pairs]),
        [_crossing(times, lts[:, j]) for j in range(len(pairs))],
        [_crossing(times, lind[:, j]) for j in range(len(pairs))])


def random_interaction(n_sys: int, n_env: int, rng: np.random.Generator,
                       scale: float = 1.0) -> PureDecoherenceInteraction:
    return PureDecoherenceInteraction(scale * rng.standard_normal((n_sys, n_env)))


def spin_bath_interaction(n_sys_spins: int, n_env_spins: int, rng: np.random.Generator,
                          coupling: float = 1.0) -> PureDecoherenceInteraction:
    """E[a, b] = sum_{i,k} J[i, k] s_i(a) t_k(b) with spin signs s, t = +-1 and Gaussian J."""
    j = coupling * rng.standard_normal((n_sys_spins, n_env_spins))
    return PureDecoherenceInteraction(_signs(n_sys_spins) @ j @ _signs(n_env_spins).T)


def _signs(n: int) -> np.ndarray:
    idx = np.arange(2**n)[:, None]
    bits = (idx >> np.arange(n - 1, -1, -1)[None, :]) & 1
    return 1.0 - 2.0 * bits
