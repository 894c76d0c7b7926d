"""Energy coarse graining and the approximate (coarse-grained) map.

A coarse graining assigns to retained levels m a set of companion levels
{nu_m} whose energies an observer cannot resolve from E_m. The approximate
map keeps the diagonal blocks, replaces the (m, nu_m) blocks by a pure phase
and drops every other off-diagonal block. Companions always lie above their
representative, so the (m, nu) coefficient is exp(+i t0 delta_m) with
delta_m >= 0, matching the sign of the exact map's exp(-i t0 (E_m - E_nu)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .ltsmap import BlockCoefficientMap, compose, gaussian_factor
from .markov import PSD_TOL
from .spectra import SpectralDecomposition, from_diagonal

DEFAULT_FAR = math.exp(-4.0)
DEFAULT_NEAR = 0.9


class CoarseGrainingError(ValueError):
    """The spectrum does not split into near groups separated by far gaps."""


@dataclass(frozen=True, eq=False)
class CoarseGraining:
    """Companion sets {nu_m}, their projectors and bookkeeping parameters.

    ``companions`` maps each retained level to a tuple of companion level
    indices; ``deltas`` gives the representative intra-group gap delta_m.
    """

    spec: SpectralDecomposition
    companions: dict
    deltas: dict
    mode: str = "greedy"
    notes: tuple = field(default=())

    def __post_init__(self):
        for m, nus in self.companions.items():
            if m in nus:
                raise ValueError(f"level {m} cannot be its own companion")
            for nu in nus:
                if m in self.companions.get(nu, ()):
                    raise ValueError(f"levels {m} and {nu} are companions of each other")

    @property
    def retained(self) -> list:
        return sorted(self.companions)

    def g_level(self, m: int) -> int:
        """g_m = tr P_m."""
        return int(self.spec.multiplicities[m])

    def g_upper(self, m: int) -> int:
        """g^(m) = tr Pi^(m)."""
        return int(sum(int(self.spec.multiplicities[nu]) for nu in self.companions.get(m, ())))

    @property
    def g(self) -> int:
        """max_m tr Pi^(m)."""
        return max((self.g_upper(m) for m in self.companions), default=0)

    @property
    def g_max(self) -> int:
        return max((self.g_level(m) for m in self.companions), default=0)

    def pi_projector(self, m: int) -> np.ndarray:
        d = self.spec.dim
        out = np.zeros((d, d), dtype=complex)
        for nu in self.companions.get(m, ()):
            out += self.spec.projector(nu)
        return out

    def pairs(self) -> list:
        return [(m, nu) for m in self.retained for nu in self.companions[m]]

    def table(self) -> list:
        """Rows (m, members, delta_m, g_m, g_upper_m)."""
        return [(m, tuple(self.companions[m]), self.deltas[m], self.g_level(m), self.g_upper(m))
                for m in self.retained]


def _validate_thresholds(lam, far, near):
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if not 0 < far < near < 1:
        raise ValueError("need 0 < far_threshold < near_threshold < 1")


def greedy_groups(order: Sequence[int], factor: np.ndarray, near: float, far: float,
                  gaps: Optional[np.ndarray] = None, width: Optional[float] = None) -> list:
    """Partition ``order`` into consecutive near groups; every cross pair must be far.

    ``factor[a, b]`` is the Gaussian suppression of the (a, b) coherence.
    """
    groups = []
    for j in order:
        if groups:
            rep = groups[-1][0]
            wide = width is not None and gaps is not None and abs(gaps[j, rep]) > width
            if not wide and all(factor[j, k] >= near for k in groups[-1]):
                groups[-1].append(j)
                continue
        groups.append([j])
    label = {j: gi for gi, grp in enumerate(groups) for j in grp}
    for a in order:
        for b in order:
            if label[a] < label[b] and factor[a, b] > far:
                raise CoarseGrainingError(
                    f"no admissible coarse-graining: levels {a} and {b} are neither near "
                    f"nor far (factor {factor[a, b]:.4g})")
    return groups


def build_coarse_graining(spec: SpectralDecomposition, lam: float,
                          far_threshold: float = DEFAULT_FAR,
                          near_threshold: float = DEFAULT_NEAR, *,
                          mode: str = "greedy", width: Optional[float] = None,
                          levels: Optional[Sequence[int]] = None) -> CoarseGraining:
    """Coarse graining of ``spec`` at time uncertainty ``lam``.

    ``mode="greedy"`` partitions the levels in energy order into groups whose
    members are pairwise near (factor >= near_threshold); the lowest member
    represents the group. ``mode="window"`` gives every level m the companions
    within (E_m, E_m + width]; only the far condition is checked there, the
    near condition being a statement about measurement resolution (see
    :func:`localtime.classify.near_factor`). ``levels`` restricts the
    construction to a subset, e.g. the support of a state.
    """
    _validate_thresholds(lam, far_threshold, near_threshold)
    order = sorted(range(spec.count) if levels is None else set(int(x) for x in levels))
    gaps = spec.gaps()
    factor = gaussian_factor(gaps, lam)
    e = spec.energies
    if mode == "greedy":
        groups = greedy_groups(order, factor, near_threshold, far_threshold, gaps, width)
        companions = {grp[0]: tuple(grp[1:]) for grp in groups}
    elif mode == "window":
        if width is None or not width > 0:
            raise ValueError("window mode needs a positive width")
        companions = {m: tuple(n for n in order if 0 < e[n] - e[m] <= width) for m in order}
        for a in order:
            for b in order:
                if e[b] - e[a] > width and factor[a, b] > far_threshold:
                    raise CoarseGrainingError(
                        f"no admissible coarse-graining: levels {a} and {b} beyond the window "
                        f"are not far (factor {factor[a, b]:.4g})")
    else:
        raise ValueError(f"unknown mode {mode!r}")
    deltas = {m: float(np.mean(e[list(nus)] - e[m])) if nus else 0.0
              for m, nus in companions.items()}
    return CoarseGraining(spec, companions, deltas, mode=mode)


def from_groups(spec: SpectralDecomposition, companions: dict,
                deltas: Optional[dict] = None) -> CoarseGraining:
    """Coarse graining with explicitly chosen companion sets."""
    e = spec.energies
    companions = {int(m): tuple(int(n) for n in nus) for m, nus in companions.items()}
    if deltas is None:
        deltas = {m: float(np.mean(e[list(nus)] - e[m])) if nus else 0.0
                  for m, nus in companions.items()}
    return CoarseGraining(spec, companions, dict(deltas), mode="explicit")


def _phase_entries(spec: SpectralDecomposition, cg: CoarseGraining, phases: str,
                   companions: str) -> dict:
    """{(a, b): f} such that the approximate map has coefficient exp(i t f) at (a, b)."""
    if phases not in ("group", "pair") or companions not in ("omit", "unit"):
        raise ValueError("phases must be 'group'|'pair' and companions 'omit'|'unit'")
    e = spec.energies
    out = {}
    if companions == "unit":
        for nus in cg.companions.values():
            for a in nus:
                for b in nus:
                    if a < b:
                        out[(a, b)] = 0.0 if phases == "group" else -(e[a] - e[b])
    for m, nus in cg.companions.items():
        for nu in nus:
            out[(m, nu)] = cg.deltas[m] if phases == "group" else -(e[m] - e[nu])
    return out


def approx_map(spec: SpectralDecomposition, cg: CoarseGraining, t0: float, *,
               phases: str = "group", companions: str = "omit") -> BlockCoefficientMap:
    """Coarse-grained map at time t0.

    ``phases="group"`` uses one phase exp(i t0 delta_m) for all (m, nu_m)
    blocks; ``phases="pair"`` uses each pair's own exp(-i t0 (E_m - E_nu)).
    ``companions`` decides the blocks between two companions of the same
    representative: ``"omit"`` drops them, ``"unit"`` keeps them with unit
    modulus (phase 1 in group mode, the pair phase in pair mode).
    """
    if not cg.spec.same_blocks(spec):
        raise ValueError("coarse graining was built for a different spectrum")
    coeff = np.eye(spec.count, dtype=complex)
    for (a, b), f in _phase_entries(spec, cg, phases, companions).items():
        coeff[a, b] = np.exp(1j * t0 * f)
        coeff[b, a] = np.conj(coeff[a, b])
    return BlockCoefficientMap(spec, coeff, t0=t0, kind=f"approx({phases},{companions})")


def check_divisibility(spec: SpectralDecomposition, cg: CoarseGraining, t0: float,
                       t_prime: float, **kw) -> float:
    """max |c(t0) - c(t0 - t') c(t')| for the approximate family."""
    if not 0 < t_prime <= t0:
        raise ValueError("need 0 < t' <= t0")
    total = approx_map(spec, cg, t0, **kw)
    split = compose(approx_map(spec, cg, t0 - t_prime, **kw), approx_map(spec, cg, t_prime, **kw))
    return total.max_difference(split)


def coupled_components(n: int, pairs) -> list:
    """Connected components of the coupling graph on n levels."""
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in pairs:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[rb] = ra
    comps = {}
    for a in range(n):
        comps.setdefault(find(a), []).append(a)
    return list(comps.values())


def min_eig_series(n: int, entries: dict, n_times: int) -> np.ndarray:
    """Smallest eigenvalue over time of unit-diagonal Hermitian matrices.

    ``entries[(a, b)]`` holds the (a, b) coefficient along the time grid
    (length ``n_times``); unlisted off-diagonal entries are zero. The
    eigenproblem is solved per connected component of the coupling graph.
    """
    out = np.full(n_times, np.inf)
    for comp in coupled_components(n, entries.keys()):
        k = len(comp)
        if k == 1:
            out = np.minimum(out, 1.0)
            continue
        pos = {lvl: i for i, lvl in enumerate(comp)}
        stack = np.zeros((n_times, k, k), dtype=complex)
        stack[:, np.arange(k), np.arange(k)] = 1.0
        for (a, b), vals in entries.items():
            if a in pos:
                stack[:, pos[a], pos[b]] = vals
                stack[:, pos[b], pos[a]] = np.conj(vals)
        out = np.minimum(out, np.linalg.eigvalsh(stack)[:, 0])
    return out


@dataclass
class CpScanReport:
    times: np.ndarray
    min_eigs: np.ndarray
    probe_criterion: np.ndarray
    violation_fraction: float
    min_eigs_unit: np.ndarray
    violation_fraction_unit: float
    criterion_violation_fraction: float
    chi: np.ndarray
    big_c: float
    g: int
    g_max: int
    extras: dict = field(default_factory=dict)

    def sustained_cp_time(self, psd_tol: float = PSD_TOL) -> float:
        """First grid time after which min_eigs never drops below -psd_tol (inf if none)."""
        return sustained_time(self.times, self.min_eigs >= -psd_tol)


def sustained_time(times: np.ndarray, ok: np.ndarray) -> float:
    bad = np.flatnonzero(~ok)
    if bad.size == 0:
        return float(times[0])
    if bad[-1] == len(times) - 1:
        return math.inf
    return float(times[bad[-1] + 1])


def _probe_sums(spec: SpectralDecomposition, probe) -> tuple:
    d = spec.dim
    if probe is None:
        p = np.full(d, 1.0 / math.sqrt(d))
    else:
        p = np.asarray(probe, dtype=float).ravel()
        if p.size != d:
            raise ValueError(f"probe has length {p.size}, expected d = {d}")
        if np.any(p < 0) or abs(np.sum(p**2) - 1.0) > 1e-10:
            raise ValueError("probe must be non-negative with sum of squares 1")
    return p, np.bincount(spec.level_of, weights=p, minlength=spec.count)


def cp_scan(spec: SpectralDecomposition, cg: CoarseGraining, time_grid, probe=None, *,
            phases: str = "group", psd_tol: float = PSD_TOL) -> CpScanReport:
    """CP along a time grid: exact min eigenvalues and the diagonal-probe criterion.

    The criterion is (1/d) sum_m s_m^2 + (2/d) sum_m cos(delta_m t) chi_m with
    s_m = sum_{i in P_m} p_i and chi_m = s_m * sum_{nu in nu_m} s_nu, i.e. the
    Choi expectation in the probe sum_i p_i |ii>.
    """
    times = np.asarray(time_grid, dtype=float).ravel()
    if times.size == 0:
        raise ValueError("empty time grid")
    _, s = _probe_sums(spec, probe)
    d = spec.dim
    reps = cg.retained
    chi = np.array([s[m] * sum(s[nu] for nu in cg.companions[m]) for m in reps])
    deltas = np.array([cg.deltas[m] for m in reps])
    big_c = float(np.sum(s**2))
    if reps:
        cos_sum = kernels.phase_sum(times, deltas[None, :], chi[None, :])[:, 0].real
    else:
        cos_sum = np.zeros_like(times)
    criterion = (big_c + 2.0 * cos_sum) / d

    min_eigs, min_eigs_u = (
        min_eig_series(spec.count, {key: np.exp(1j * times * f) for key, f in
                                    _phase_entries(spec, cg, phases, conv).items()}, times.size)
        for conv in ("omit", "unit"))
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
    )


def synthetic_grouped_spectrum(n_groups: int, group_size: int, rng: np.random.Generator,
                               delta0: float = 1.0, spacing: float = 60.0,
                               spread: float = 0.5) -> SpectralDecomposition:
    """Well separated clusters of ``group_size`` levels with random intra-cluster step.

    Cluster g sits at g * spacing; its members are spaced by
    delta0 * U(1 - spread, 1 + spread), so the group gaps are incommensurate.
    """
    energies = []
    for grp in range(n_groups):
        step = delta0 * rng.uniform(1.0 - spread, 1.0 + spread)
        energies.extend(grp * spacing + step * np.arange(group_size))
    return from_diagonal(energies, energy_scale=delta0)
