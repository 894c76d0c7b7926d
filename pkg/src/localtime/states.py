"""Density matrices and the state functionals used throughout the package."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .spectra import SpectralDecomposition

HERM_TOL = 1e-12
TRACE_TOL = 1e-12
POS_TOL = 1e-10


class InvalidStateError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Trace-one positive semidefinite Hermitian matrix.

    Construction validates and rejects; nothing is silently repaired.
    ``check=False`` skips validation for intermediate results that are known
    to be valid by construction.
    """

    matrix: np.ndarray
    check: bool = True

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidStateError("density matrix must be square")
        if self.check:
            if np.max(np.abs(m - m.conj().T), initial=0.0) > HERM_TOL:
                raise InvalidStateError("density matrix is not Hermitian")
            if abs(np.trace(m) - 1.0) > TRACE_TOL:
                raise InvalidStateError(f"trace {np.trace(m).real:.3g} != 1")
            if np.linalg.eigvalsh(m)[0] < -POS_TOL:
                raise InvalidStateError("density matrix has a negative eigenvalue")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)


def _check_dim(rho: DensityMatrix, spec: SpectralDecomposition):
    if rho.dim != spec.dim:
        raise ValueError(f"state dimension {rho.dim} does not match spectrum dimension {spec.dim}")


def from_pure(vector) -> DensityMatrix:
    v = np.asarray(vector, dtype=complex).ravel()
    norm = np.linalg.norm(v)
    if norm == 0:
        raise InvalidStateError("zero vector")
    v = v / norm
    return DensityMatrix(np.outer(v, v.conj()))


def maximally_mixed(dim: int) -> DensityMatrix:
    return DensityMatrix(np.eye(dim) / dim)


def random_density(dim: int, rng: np.random.Generator, rank: Optional[int] = None) -> DensityMatrix:
    """Hilbert-Schmidt random state G G^dag / tr(G G^dag), G complex Gaussian."""
    k = dim if rank is None else rank
    g = rng.standard_normal((dim, k)) + 1j * rng.standard_normal((dim, k))
    m = g @ g.conj().T
    m = 0.5 * (m + m.conj().T)
    return DensityMatrix(m / np.trace(m).real)


def random_pure(dim: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def extremes_superposition(spec: SpectralDecomposition, sign: int = 1) -> np.ndarray:
    """(|E_max> + sign |E_g>) / sqrt(2) as a state vector."""
    v = spec.basis_vector(spec.count - 1) + sign * spec.basis_vector(0)
    return v / np.linalg.norm(v)


def energy_stats(rho: DensityMatrix, spec: SpectralDecomposition) -> tuple:
    """(<H>, Delta H, <H> - E_g)."""
    _check_dim(rho, spec)
    pops = spec.populations(rho.matrix)
    mean = float(pops @ spec.energies)
    var = float(pops @ spec.energies**2) - mean**2
    std = float(np.sqrt(max(var, 0.0)))
    return mean, std, mean - spec.ground


def luders_project(rho: DensityMatrix, spec: SpectralDecomposition) -> DensityMatrix:
    """sum_m P_m rho P_m."""
    _check_dim(rho, spec)
    x = spec.to_level_basis(rho.matrix)
    lv = spec.level_of
    mask = lv[:, None] == lv[None, :]
    return DensityMatrix(spec.from_level_basis(np.where(mask, x, 0.0)), check=False)


def fidelity(rho: DensityMatrix, psi) -> float:
    """sqrt(<psi|rho|psi>) for a pure reference state."""
    v = np.asarray(psi, dtype=complex).ravel()
    if v.size != rho.dim:
        raise ValueError("dimension mismatch between state and reference vector")
    v = v / np.linalg.norm(v)
    val = np.real(v.conj() @ rho.matrix @ v)
    return float(np.sqrt(min(max(val, 0.0), 1.0)))


def trace_distance(a: DensityMatrix, b: DensityMatrix) -> float:
    if a.dim != b.dim:
        raise ValueError("dimension mismatch")
    diff = a.matrix - b.matrix
    diff = 0.5 * (diff + diff.conj().T)
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(diff))))
