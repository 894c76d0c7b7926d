"""Complete positivity, divisibility and Markovianity verdicts for block maps.

Two CP tests are provided. :func:`is_cp` is exact: for a block map the Choi
matrix is W c W^dag with W having orthogonal columns vec(P_m), so the map is
CP iff its coefficient matrix c is PSD. :func:`jamiolkowski_check` probes the
explicit Choi state (identity (x) map)[|psi><psi|] with test vectors, using
only the map's action on operators.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels
from .ltsmap import (BlockCoefficientMap, LocalTimeParams, _check_same, apply, compose,
                     exact_map)
from .spectra import SpectralDecomposition
from .states import DensityMatrix, luders_project, trace_distance

PSD_TOL = 1e-10
MAX_CHOI_DIM = 64


@dataclass(frozen=True, eq=False)
class CpReport:
    min_eigenvalue: float
    is_cp: bool
    witness: Optional[np.ndarray] = None


def is_cp(bmap: BlockCoefficientMap, psd_tol: float = PSD_TOL) -> CpReport:
    c = 0.5 * (bmap.coeff + bmap.coeff.conj().T)
    w, v = np.linalg.eigh(c)
    return CpReport(float(w[0]), bool(w[0] >= -psd_tol), v[:, 0].copy())


def choi_matrix(bmap: BlockCoefficientMap) -> np.ndarray:
    """(1/d) sum_ij |i><j| (x) E[|i><j|], indexed as (i*d + k, j*d + l)."""
    d = bmap.dim
    if d > MAX_CHOI_DIM:
        raise ValueError(f"dense Choi matrix refused for d={d} > {MAX_CHOI_DIM}")
    choi = np.zeros((d, d, d, d), dtype=complex)
    unit = np.zeros((d, d), dtype=complex)
    for i in range(d):
        for j in range(d):
            unit[i, j] = 1.0
            choi[i, :, j, :] = bmap.act(unit)
            unit[i, j] = 0.0
    return choi.reshape(d * d, d * d) / d


def jamiolkowski_check(bmap: BlockCoefficientMap, probes) -> float:
    """Minimum of <phi| (I (x) E)[|psi><psi|] |phi> over the probe vectors."""
    d = bmap.dim
    probes = np.atleast_2d(np.asarray(probes, dtype=complex))
    if probes.shape[1] != d * d:
        raise ValueError(f"probes must have length d^2 = {d * d}")
    norms = np.linalg.norm(probes, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-8):
        raise ValueError("probes must be normalized")
    choi = choi_matrix(bmap)
    vals = np.einsum("pa,ab,pb->p", probes.conj(), choi, probes)
    return float(np.min(vals.real))


def random_probes(d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    p = rng.standard_normal((n, d * d)) + 1j * rng.standard_normal((n, d * d))
    return p / np.linalg.norm(p, axis=1, keepdims=True)


def witness_probe(bmap: BlockCoefficientMap, report: Optional[CpReport] = None) -> np.ndarray:
    """Lift the coefficient-matrix witness w to phi = sum_m (w_m / g_m) vec(P_m)."""
    report = report or is_cp(bmap)
    spec = bmap.spec
    d = spec.dim
    phi = np.zeros(d * d, dtype=complex)
    for m in range(spec.count):
        # entry (i*d + k) of vec(P) is P[k, i]
        phi += report.witness[m] / spec.multiplicities[m] * spec.projector(m).T.reshape(-1)
    return phi / np.linalg.norm(phi)


class FamilyNotInvertibleError(ValueError):
    pass


def intermediate_map(total: BlockCoefficientMap, initial: BlockCoefficientMap,
                     zero_tol: float = 1e-300) -> BlockCoefficientMap:
    """The unique block map M with total = M o initial (coefficient-wise quotient)."""
    _check_same(total, initial)
    if np.any(np.abs(initial.coeff) <= zero_tol):
        raise FamilyNotInvertibleError("family not invertible at this block")
    t0 = None
    if total.t0 is not None and initial.t0 is not None:
        t0 = total.t0 - initial.t0
    return BlockCoefficientMap(total.spec, total.coeff / initial.coeff, t0=t0,
                               kind="intermediate")


def family_divisibility_defect(spec: SpectralDecomposition, params: LocalTimeParams,
                               t_prime: float) -> float:
    """max |c(t0) - c(t0 - t') c(t')| over blocks for the exact family."""
    if not 0 < t_prime <= params.t0:
        raise ValueError("need 0 < t' <= t0")
    total = exact_map(spec, params)
    late = exact_map(spec, LocalTimeParams(params.t0 - t_prime, params.lam))
    early = exact_map(spec, LocalTimeParams(t_prime, params.lam))
    return total.max_difference(compose(late, early))


def trapezoid_weights(times: np.ndarray) -> np.ndarray:
    dt = np.diff(times)
    w = np.zeros_like(times)
    w[:-1] += dt / 2
    w[1:] += dt / 2
    return w


def ergodic_average(spec: SpectralDecomposition, params: LocalTimeParams, rho: DensityMatrix,
                    t_max: float, n_samples: int) -> tuple:
    """(Luders state, trapezoid time average of sigma(t0) over [0, t_max], trace distance)."""
    if not t_max > 0 or n_samples < 2:
        raise ValueError("need t_max > 0 and n_samples >= 2")
    times = np.linspace(0.0, t_max, n_samples)
    w = trapezoid_weights(times) / t_max
    gaps = spec.gaps()
    avg_phase = kernels.phase_sum(gaps.ravel(), times[None, :], w[None, :])[:, 0]
    base = exact_map(spec, LocalTimeParams(0.0, params.lam)).coeff
    avg = BlockCoefficientMap(spec, base * avg_phase.reshape(gaps.shape), kind="time-average")
    numeric = apply(avg, rho)
    analytic = luders_project(rho, spec)
    return analytic, numeric, trace_distance(analytic, numeric)


@dataclass
class PairEvidence:
    t_early: float
    t_late: float
    family_min_eig: float
    quotient_min_eig: float
    composition_defect: float


@dataclass
class Verdict:
    verdict: str
    times: list
    initial_min_eigs: list
    pairs: list = field(default_factory=list)
    failing_pair: Optional[tuple] = None

    @property
    def markovian(self) -> bool:
        return self.verdict == "markovian"


def markovianity_verdict(family: Callable[[float], BlockCoefficientMap], times: Sequence[float],
                         psd_tol: float = PSD_TOL, comp_tol: float = 1e-12) -> Verdict:
    """Apply the Markovianity definition literally to a family of maps.

    ``family(t)`` returns the map for an interval of duration ``t``; the
    family member E_(t2, t1) is ``family(t2 - t1)``. Markovian requires every
    member to be CP and E_(t2, 0) = E_(t2, t1) o E_(t1, 0) for every pair of
    grid times.
    """
    times = [float(t) for t in times]
    if len(times) < 3:
        raise ValueError("need at least three time points")
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("times must be strictly increasing")
    maps = [family(t) for t in times]
    initial = [is_cp(m, psd_tol).min_eigenvalue for m in maps]
    pairs = []
    failing = None
    by_comp = by_cp = False
    for i, (ti, mi) in enumerate(zip(times, maps)):
        if initial[i] < -psd_tol:
            by_cp = True
            failing = failing or (0.0, ti)
        for j in range(i + 1, len(times)):
            tj, mj = times[j], maps[j]
            member = family(tj - ti)
            defect = mj.max_difference(compose(member, mi))
            try:
                q_eig = is_cp(intermediate_map(mj, mi), psd_tol).min_eigenvalue
            except FamilyNotInvertibleError:
                q_eig = float("nan")
            ev = PairEvidence(ti, tj, is_cp(member, psd_tol).min_eigenvalue, q_eig, defect)
            pairs.append(ev)
            if defect > comp_tol:
                by_comp = True
                failing = failing or (ti, tj)
            if ev.family_min_eig < -psd_tol:
                by_cp = True
                failing = failing or (ti, tj)
    if by_comp:
        verdict = "non-markovian-by-composition"
    elif by_cp:
        verdict = "non-markovian-by-cp"
    else:
        verdict = "markovian"
    return Verdict(verdict, times, initial, pairs, failing)
