"""The local-time dynamical map and the objects derived from it.

Every map here acts by entry-wise multiplication on the eigenblocks of a
fixed projector family::

    rho  ->  sum_{m,n} c[m, n] P_m rho P_n

so a map is stored as its N x N coefficient matrix over distinct levels
(:class:`BlockCoefficientMap`), never as a d^2 x d^2 superoperator.
Composition of two such maps is the Schur product of their coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .spectra import SpectralDecomposition
from .states import DensityMatrix, energy_stats, trace_distance


class KrausFormError(ValueError):
    """The phase-stripped coefficient matrix is not PSD, so no Kraus form exists."""


def gaussian_factor(gap, lam):
    """exp(-gap^2 / (4 lam)); lam = inf gives 1."""
    gap = np.asarray(gap, dtype=float)
    if math.isinf(lam):
        return np.ones_like(gap)
    return np.exp(-gap**2 / (4.0 * lam))


@dataclass(frozen=True)
class LocalTimeParams:
    """Final instant t0, Gaussian concentration lam and optional window half-width."""

    t0: float
    lam: float
    delta_t: Optional[float] = None

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.t0 < 0:
            raise ValueError("t0 must be non-negative")
        if self.delta_t is not None and not self.delta_t > 0:
            raise ValueError("delta_t must be positive")

    def validate(self, spec: SpectralDecomposition, rho: Optional[DensityMatrix] = None) -> list:
        """Modelling-bound checks; returns human-readable warnings (empty if all hold)."""
        warnings = []
        if self.lam <= spec.energy_scale**2:
            warnings.append(
                f"lambda={self.lam:.6g} <= C^2={spec.energy_scale**2:.6g} (time uncertainty too large)")
        if self.t0 == 0:
            warnings.append("t0 = 0 lies outside the dynamical domain t0 > 0")
        if self.delta_t is not None:
            if self.delta_t <= self.lam**-0.5:
                warnings.append("delta_t <= lambda^(-1/2)")
            if rho is not None:
                tau = tau_min(rho, spec)
                if not tau > self.delta_t:
                    warnings.append(f"delta_t={self.delta_t:.6g} >= tau_min={tau:.6g}")
        return warnings


def tau_min(rho: DensityMatrix, spec: SpectralDecomposition) -> float:
    """max{pi / (2 Delta H), pi / (2 (<H> - E_g))}; infinite for stationary data."""
    _, std, above = energy_stats(rho, spec)
    vals = [math.pi / (2 * x) if x > 0 else math.inf for x in (std, above)]
    return max(vals)


@dataclass(frozen=True, eq=False)
class BlockCoefficientMap:
    """rho -> sum_{m,n} coeff[m, n] P_m rho P_n over the blocks of ``spec``."""

    spec: SpectralDecomposition
    coeff: np.ndarray
    t0: Optional[float] = None
    kind: str = ""
    notes: tuple = field(default=())

    def __post_init__(self):
        c = np.array(self.coeff, dtype=complex)
        n = self.spec.count
        if c.shape != (n, n):
            raise ValueError(f"coefficient matrix must be {n}x{n}")
        c.setflags(write=False)
        object.__setattr__(self, "coeff", c)

    @property
    def dim(self) -> int:
        return self.spec.dim

    def act(self, x: np.ndarray) -> np.ndarray:
        """Apply to an arbitrary d x d operator."""
        x = np.asarray(x, dtype=complex)
        if x.shape != (self.dim, self.dim):
            raise ValueError(f"operator shape {x.shape} does not match dimension {self.dim}")
        y = kernels.schur_apply(self.spec.to_level_basis(x), self.spec.level_of, self.coeff)
        return self.spec.from_level_basis(y)

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.coeff - self.coeff.conj().T)))

    def diagonal_error(self) -> float:
        return float(np.max(np.abs(np.diag(self.coeff) - 1.0)))

    def max_difference(self, other: "BlockCoefficientMap") -> float:
        _check_same(self, other)
        return float(np.max(np.abs(self.coeff - other.coeff)))


def _check_same(a: BlockCoefficientMap, b: BlockCoefficientMap):
    if not a.spec.same_blocks(b.spec):
        raise ValueError("maps are defined on different block structures")


def apply(bmap: BlockCoefficientMap, rho: DensityMatrix) -> DensityMatrix:
    if rho.dim != bmap.dim:
        raise ValueError(f"state dimension {rho.dim} does not match map dimension {bmap.dim}")
    out = bmap.act(rho.matrix)
    return DensityMatrix(0.5 * (out + out.conj().T), check=False)


def identity_map(spec: SpectralDecomposition) -> BlockCoefficientMap:
    n = spec.count
    return BlockCoefficientMap(spec, np.ones((n, n)), t0=0.0, kind="identity")


def luders_map(spec: SpectralDecomposition) -> BlockCoefficientMap:
    return BlockCoefficientMap(spec, np.eye(spec.count), kind="luders")


def exact_map(spec: SpectralDecomposition, params: LocalTimeParams) -> BlockCoefficientMap:
    """c[m, n] = exp(-i t0 (E_m - E_n)) exp(-(E_m - E_n)^2 / (4 lam))."""
    gaps = spec.gaps()
    coeff = np.exp(-1j * params.t0 * gaps) * gaussian_factor(gaps, params.lam)
    np.fill_diagonal(coeff, 1.0)
    return BlockCoefficientMap(spec, coeff, t0=params.t0, kind="exact",
                               notes=tuple(params.validate(spec)))


def unitary_map(spec: SpectralDecomposition, t: float) -> BlockCoefficientMap:
    coeff = np.exp(-1j * t * spec.gaps())
    return BlockCoefficientMap(spec, coeff, t0=t, kind="unitary")


def compose(outer: BlockCoefficientMap, inner: BlockCoefficientMap) -> BlockCoefficientMap:
    """outer o inner; block orthogonality reduces this to a Schur product."""
    _check_same(outer, inner)
    t0 = None
    if outer.t0 is not None and inner.t0 is not None:
        t0 = outer.t0 + inner.t0
    return BlockCoefficientMap(outer.spec, outer.coeff * inner.coeff, t0=t0, kind="composite")


def kfold_family_map(spec: SpectralDecomposition, params: LocalTimeParams,
                     k: int) -> BlockCoefficientMap:
    """Compose the family map over k equal subintervals of (0, t0]."""
    if k < 1:
        raise ValueError("k must be a positive integer")
    step = exact_map(spec, LocalTimeParams(params.t0 / k, params.lam))
    out = step
    for _ in range(k - 1):
        out = compose(step, out)
    return BlockCoefficientMap(spec, out.coeff, t0=params.t0, kind=f"kfold({k})")


@dataclass(frozen=True, eq=False)
class KrausSet:
    operators: tuple
    weights: np.ndarray

    def act(self, x: np.ndarray) -> np.ndarray:
        return sum(k @ x @ k.conj().T for k in self.operators)

    def completeness_error(self) -> float:
        d = self.operators[0].shape[0]
        total = sum(k.conj().T @ k for k in self.operators)
        return float(np.linalg.norm(total - np.eye(d)))


def kraus_decomposition(bmap: BlockCoefficientMap, tol: float = 1e-10) -> KrausSet:
    """Kraus operators K_k = sqrt(g_k) sum_m u_k[m] exp(-i t0 E_m) P_m.

    The per-level phases exp(-i t0 E_m) are stripped from the coefficients
    using the map's ``t0`` (zero if unknown); the remaining Hermitian matrix
    A = sum_k g_k u_k u_k^dag must be PSD.
    """
    spec = bmap.spec
    t0 = bmap.t0 or 0.0
    phase = np.exp(-1j * t0 * spec.energies)
    a = bmap.coeff * np.outer(phase.conj(), phase)
    a = 0.5 * (a + a.conj().T)
    gam, vec = np.linalg.eigh(a)
    if gam[0] < -tol:
        raise KrausFormError(
            f"no Kraus form at this instant (min eigenvalue {gam[0]:.3e})")
    keep = gam > tol * 1e-2
    ops = []
    for g, v in zip(gam[keep][::-1], vec[:, keep].T[::-1]):
        big = np.argmax(np.abs(v))
        v = v * (np.abs(v[big]) / v[big])
        diag = np.sqrt(g) * (v * phase)[spec.level_of]
        ops.append(spec.from_level_basis(np.diag(diag)))
    return KrausSet(tuple(ops), gam[keep][::-1].copy())


def identity_defect(spec: SpectralDecomposition, lam: float, rho: DensityMatrix) -> float:
    """|| E_(0,0)[rho] - rho ||_F: the map at t0 = 0 is not the identity."""
    m = exact_map(spec, LocalTimeParams(0.0, lam))
    return float(np.linalg.norm(m.act(rho.matrix) - rho.matrix))


def initial_instant_perturbation(pre_spec: SpectralDecomposition, lambda_prime: float,
                                 rho0: DensityMatrix, lam: Optional[float] = None) -> tuple:
    """State smeared by an uncertain start of the interaction, and its trace distance to rho0.

    ``pre_spec`` is the weak pre-interaction Hamiltonian. When the main
    evolution's ``lam`` is given, ``lambda_prime >= lam`` is enforced.
    """
    if lam is not None and lambda_prime < lam:
        raise ValueError("lambda_prime cannot be smaller than lambda")
    smeared = exact_map(pre_spec, LocalTimeParams(0.0, lambda_prime))
    sigma = apply(smeared, rho0)
    return sigma, trace_distance(sigma, rho0)
