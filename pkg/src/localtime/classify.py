"""Which dynamical regime an initial state falls into.

Given the bandwidth E, the energy spread Delta H and the mean excitation
<H> - E_g of a state, the ratios d = E / Delta H and r = E / (<H> - E_g)
decide whether an energy coarse graining can exist (coarse-grained
Markovian), whether the state is spread widely enough to be followed
closely by the unitary evolution (unitary-like), or neither (non-Markovian).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Union

import numpy as np

from .coarse import DEFAULT_FAR, CoarseGrainingError, build_coarse_graining
from .ltsmap import gaussian_factor
from .spectra import SpectralDecomposition
from .states import DensityMatrix, energy_stats

# k must stay below max(d, r) / K_DIVISOR.
K_DIVISOR = 2.55
POP_TOL = 1e-6
D_HI = 2.1
R_HI = 2.1
FID_TOL = 0.70
R_SMALL = 1.0
S_PARAM = 9.0
# sqrt(lam) sits this fraction above the smallest allowed value.
MINIMAL_MARGIN = 1e-4
PURE_TOL = 1e-9

COARSE_MARKOVIAN = "coarse_markovian"
UNITARY_LIKE = "unitary_like"
NON_MARKOVIAN = "non_markovian"


@dataclass
class DomainReport:
    d_param: float
    r_param: float
    k_feasible: Optional[tuple]
    k_chosen: Optional[float]
    delta_E: Optional[float]
    x: Optional[float]
    r_small: float
    s: float
    domain: str
    fidelity_floor: Optional[float]
    lam: float
    mean_energy: float
    energy_spread: float
    excitation: float
    bandwidth: float
    support: list
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["k_feasible"] = list(self.k_feasible) if self.k_feasible else None
        return out


def minimal_lambda(spread: float, excitation: float) -> float:
    """lam with sqrt(lam) just above min(2 Delta H / pi, 2 (<H> - E_g) / pi)."""
    base = min(2.0 * spread / math.pi, 2.0 * excitation / math.pi)
    if not base > 0:
        raise ValueError("minimal lambda undefined for a stationary state")
    return ((1.0 + MINIMAL_MARGIN) * base) ** 2


def x_param(k: float, level_energy: float, bandwidth: float, r_small: float = R_SMALL,
            s: float = S_PARAM) -> float:
    """x = (r s + 1) / (1 - k E_m / E); requires k E_m < E."""
    denom = 1.0 - k * level_energy / bandwidth
    if not denom > 0:
        raise ValueError("k * E_m must stay below E for x > 0")
    return (r_small * s + 1.0) / denom


def near_factor(spec: SpectralDecomposition, k: float, r_small: float, s: float, lam: float,
                m: Optional[int] = None, energy: Optional[float] = None,
                x: Optional[float] = None) -> dict:
    """Gaussian factor of the intra-group gap delta_m = r_small * E / (x k).

    The level energy E_m comes from level ``m`` of ``spec`` or from
    ``energy``. Both exp(-delta^2 / (4 lam)) ("A", the form used for the
    maps) and exp(-delta^2 / lam) ("B") are returned. A supplied ``x`` must
    match (r_small s + 1) / (1 - k E_m / E).
    """
    if min(k, r_small, s, lam) <= 0:
        raise ValueError("k, r_small, s and lambda must be positive")
    if (m is None) == (energy is None):
        raise ValueError("give exactly one of m and energy")
    e_m = float(spec.energies[m]) if m is not None else float(energy)
    big_e = spec.bandwidth
    x_expected = x_param(k, e_m, big_e, r_small, s)
    if x is not None and not math.isclose(x, x_expected, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError(f"inconsistent parameters: x={x} but (rs+1)/(1-kE_m/E)={x_expected}")
    delta_e = big_e / (x_expected * k)
    delta = r_small * delta_e
    return {"x": x_expected, "delta_E": delta_e, "delta_m": delta,
            "A": float(math.exp(-delta**2 / (4.0 * lam))),
            "B": float(math.exp(-delta**2 / lam))}


def fidelity_floor(spec: SpectralDecomposition, psi, lam: float) -> float:
    """sqrt((1 + A) / 2) for a pure state on two levels, A their Gaussian factor."""
    pops = spec.populations(np.outer(psi, np.conj(psi)))
    support = np.flatnonzero(pops > POP_TOL)
    if support.size != 2:
        raise ValueError(f"state must be supported on exactly two levels (found {support.size})")
    a = float(gaussian_factor(spec.energies[support[1]] - spec.energies[support[0]], lam))
    return math.sqrt(0.5 * (1.0 + a))


def pure_fidelity(spec: SpectralDecomposition, populations: np.ndarray, lam: float) -> float:
    """sqrt(w^T G w): overlap of a pure state's smeared and sharp evolutions (time independent)."""
    g = gaussian_factor(spec.gaps(), lam)
    return float(math.sqrt(max(populations @ g @ populations, 0.0)))


def classify_state(spec: SpectralDecomposition, rho: DensityMatrix,
                   lambda_policy: Union[str, float] = "minimal", *,
                   r_small: float = R_SMALL, s: float = S_PARAM, pop_tol: float = POP_TOL,
                   d_hi: float = D_HI, r_hi: float = R_HI, fid_tol: float = FID_TOL,
                   far_threshold: float = DEFAULT_FAR) -> DomainReport:
    mean, spread, excitation = energy_stats(rho, spec)
    big_e = spec.bandwidth
    pops = spec.populations(rho.matrix)
    support = [int(i) for i in np.flatnonzero(pops > pop_tol)]
    notes = []
    if len(support) <= 1 or spread <= 0:
        lam = math.inf if lambda_policy == "minimal" else float(lambda_policy)
        notes.append("stationary state: no coherence between populated levels")
        return DomainReport(math.inf, math.inf if excitation <= 0 else big_e / excitation, None,
                            None, None, None, r_small, s, COARSE_MARKOVIAN, 1.0, lam, mean,
                            spread, excitation, big_e, support, notes)

    if lambda_policy == "minimal":
        lam = minimal_lambda(spread, excitation)
    else:
        lam = float(lambda_policy)
        if not lam > 0:
            raise ValueError("explicit lambda must be positive")
    d_param = big_e / spread
    r_param = big_e / excitation if excitation > 0 else math.inf
    k_hi = max(d_param, r_param) / K_DIVISOR
    e_g = spec.ground
    if e_g > 0:
        k_hi = min(k_hi, big_e / e_g)
    k_feasible = (1.0, k_hi) if k_hi > 1.0 else None
    k_chosen = x = delta_e = None
    domain = NON_MARKOVIAN
    if k_feasible is not None:
        k_chosen = 0.5 * (k_feasible[0] + k_feasible[1])
        x = x_param(k_chosen, e_g, big_e, r_small, s)
        delta_e = big_e / (x * k_chosen)
        try:
            build_coarse_graining(spec, lam, far_threshold, mode="window",
                                  width=big_e / k_chosen, levels=support)
            domain = COARSE_MARKOVIAN
        except CoarseGrainingError as exc:
            notes.append(str(exc))
    else:
        notes.append(f"k < {k_hi:.4g}: no coarse graining with k > 1")

    purity = rho.purity()
    fid = pure_fidelity(spec, pops, lam) if abs(purity - 1.0) < PURE_TOL else None
    if domain != COARSE_MARKOVIAN and d_param <= d_hi and r_param <= r_hi \
            and fid is not None and fid >= fid_tol:
        domain = UNITARY_LIKE
    return DomainReport(d_param, r_param, k_feasible, k_chosen, delta_e, x, r_small, s, domain,
                        fid, lam, mean, spread, excitation, big_e, support, notes)
